"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class ApqrError(Exception):
    exit_code = 1


class DomainError(ApqrError, ValueError):
    exit_code = 3


class ParseError(ApqrError, ValueError):
    exit_code = 3

    def __init__(self, message, line=None, column=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if column is not None:
            loc.append(f"column {column}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.line = line
        self.column = column


class ShapeError(ApqrError, ValueError):
    exit_code = 4


class ConvergenceError(ApqrError, RuntimeError):
    exit_code = 5

    def __init__(self, message, stage=None, grad_norm=None, trace=None):
        super().__init__(message)
        self.stage = stage
        self.grad_norm = grad_norm
        self.trace = trace


class MonotonicityError(ConvergenceError):
    """A block update lowered the objective: an optimizer bug, not bad data."""


class CapacityError(ApqrError, ValueError):
    exit_code = 6


class SingularityError(ApqrError, ValueError):
    exit_code = 7


class NumericError(ApqrError, ArithmeticError):
    exit_code = 7


class DegenerateColumnError(ApqrError, ValueError):
    exit_code = 4

    def __init__(self, message, index):
        super().__init__(message)
        self.index = index


class ExhaustionError(ApqrError, ValueError):
    exit_code = 6

    def __init__(self, message, rank):
        super().__init__(message)
        self.rank = rank


class VersionError(ApqrError, ValueError):
    exit_code = 8


class MissingSourceError(ApqrError, FileNotFoundError):
    exit_code = 9


EXIT_CODES = {
    "ok": 0,
    "other": ApqrError.exit_code,
    "usage": 2,
    "parse": ParseError.exit_code,
    "shape": ShapeError.exit_code,
    "convergence": ConvergenceError.exit_code,
    "capacity": CapacityError.exit_code,
    "numeric": NumericError.exit_code,
    "version": VersionError.exit_code,
    "missing-file": MissingSourceError.exit_code,
}
