"""Smoothing schedules: decreasing widths driving the Huber loss to the check loss."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError
from .loss import gap_bound


@dataclass(frozen=True)
class SmoothingSchedule:
    """Decreasing sequence of smoothing widths plus stop rules.

    Parameters
    ----------
    nu_values : strictly decreasing positive widths, one per stage.
    outer_tol : relative objective-change tolerance; the absolute threshold
        is ``outer_tol * (1 + |objective|)``.
    inner_tol : relative gradient tolerance for every smooth minimization,
        ``||grad||_inf <= inner_tol * (1 + |objective|)``.
    max_outer : cap on the number of stages actually run.
    max_inner : iteration cap for one smooth minimization (one block update).
    max_passes : cap on block-relaxation passes within a stage.
    precision : if set, stop after the first stage whose total smoothing
        error ``n * gap_bound(nu)`` is below ``precision * (1 + |check objective|)``.
    """

    nu_values: tuple = field(default=())
    outer_tol: float = 1e-6
    inner_tol: float = 1e-8
    max_outer: int = 40
    max_inner: int = 500
    max_passes: int = 2000
    precision: float | None = 1e-6

    def __post_init__(self):
        nus = tuple(float(v) for v in self.nu_values)
        if not nus:
            raise DomainError("schedule needs at least one smoothing width")
        if not all(np.isfinite(v) and v > 0 for v in nus):
            raise DomainError("smoothing widths must be finite and positive")
        if any(b >= a for a, b in zip(nus, nus[1:])):
            raise DomainError("smoothing widths must be strictly decreasing")
        if min(self.max_outer, self.max_inner, self.max_passes) < 1:
            raise DomainError("iteration caps must be >= 1")
        if not (self.outer_tol > 0 and self.inner_tol > 0):
            raise DomainError("tolerances must be positive")
        object.__setattr__(self, "nu_values", nus)

    def stages(self):
        return self.nu_values[: self.max_outer]

    def reached_precision(self, tau: float, nu: float, n: int, check_objective: float) -> bool:
        if self.precision is None:
            return False
        return n * gap_bound(tau, nu) < self.precision * (1.0 + abs(check_objective))

    def with_options(self, **kw) -> "SmoothingSchedule":
        return replace(self, **kw)


def data_scale(y) -> float:
    """Robust spread of ``y``: scaled MAD, falling back to sd, then 1."""
    y = np.asarray(y, dtype=float)
    med = np.median(y)
    s = 1.4826 * np.median(np.abs(y - med))
    if s > 0:
        return float(s)
    s = float(np.std(y))
    if s > 0:
        return s
    return 1.0


def geometric_schedule(nu0: float, ratio: float = 0.2, stages: int = 40, **kw) -> SmoothingSchedule:
    if not (0 < ratio < 1):
        raise DomainError("schedule ratio must lie in (0, 1)")
    nus = tuple(nu0 * ratio**k for k in range(stages))
    return SmoothingSchedule(nu_values=nus, max_outer=stages, **kw)


def default_schedule(y, ratio: float = 0.2, stages: int = 40, **kw) -> SmoothingSchedule:
    """Data-scaled schedule: ``nu_0`` is the robust spread of ``y``."""
    return geometric_schedule(data_scale(y), ratio=ratio, stages=stages, **kw)
