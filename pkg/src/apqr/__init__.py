"""Alternative partial quantile regression for functional linear quantile models."""

__version__ = "0.1.0"

from .basis import (
    BasisMatrix,
    CurveSet,
    canonicalize,
    fpc_basis,
    pls_basis,
    project,
    standardize,
)
from .errors import (
    ApqrError,
    CapacityError,
    ConvergenceError,
    DomainError,
    MonotonicityError,
    ParseError,
    ShapeError,
)
from .loss import (
    HuberParams,
    QuantileLevel,
    approximation_gap_bound,
    check_loss,
    huber_derivative,
    huber_loss,
)
from .model import FittedQuantileModel, fit_model, predict
from .oracle import exact_qr_fit, smoothed_qr_fit
from .pqr import (
    PqrState,
    eta_gradient,
    fit_apqr,
    information,
    objective_l,
    objective_lN,
    score,
)
from .schedule import SmoothingSchedule, default_schedule, geometric_schedule
from .select import SelectionReport, bic_score, cv_score, select_k
from .sim import SimSpec, gen_sim1, gen_sim2, run_study

__all__ = [name for name in dir() if not name.startswith("_")]
