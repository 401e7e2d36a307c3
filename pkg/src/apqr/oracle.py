"""Quantile regression solvers: exact vertex enumeration and smoothed descent."""

from __future__ import annotations

from itertools import combinations

import numpy as np

from . import _descent
from .errors import CapacityError, ShapeError, SingularityError
from .loss import _tau, check_loss, gap_bound
from .schedule import SmoothingSchedule, default_schedule

ORACLE_MAX_N = 30
_BATCH = 20000


def _validate_design(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ShapeError(f"design {X.shape} does not match response length {y.shape[0]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ShapeError("design and response must be finite")
    n, q = X.shape
    if n < q:
        raise ShapeError(f"need at least as many rows as columns, got n={n}, q={q}")
    return X, y


def check_objective(X, y, coef, tau) -> float:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return float(np.sum(check_loss(np.asarray(y, float) - X @ np.asarray(coef, float), tau)))


def _full_rank(X) -> bool:
    return np.linalg.matrix_rank(X) == X.shape[1]


def exact_qr_fit(X, y, tau) -> np.ndarray:
    """Exact linear quantile regression by brute-force vertex enumeration.

    Some optimal solution interpolates ``q`` observations, so it suffices to
    solve every nonsingular ``q x q`` subsystem and keep the best. Ties go to
    the lexicographically smallest subset. Limited to ``n <= 30``.
    """
    tau = _tau(tau)
    X, y = _validate_design(X, y)
    n, q = X.shape
    if n > ORACLE_MAX_N:
        raise CapacityError(f"exact oracle is limited to n <= {ORACLE_MAX_N}, got n={n}")
    if not _full_rank(X):
        raise SingularityError("design matrix is rank deficient")

    best_obj, best_coef = np.inf, None
    subsets = combinations(range(n), q)
    while True:
        chunk = np.array([s for _, s in zip(range(_BATCH), subsets)], dtype=np.intp)
        if chunk.size == 0:
            break
        A = X[chunk]
        b = y[chunk]
        det = np.linalg.det(A)
        scale = np.prod(np.linalg.norm(A, axis=2), axis=1)
        ok = np.abs(det) > 1e-12 * np.maximum(scale, 1e-300)
        if not np.any(ok):
            continue
        coefs = np.linalg.solve(A[ok], b[ok][..., None])[..., 0]
        resid = y[None, :] - coefs @ X.T
        objs = np.sum(resid * (tau - (resid < 0)), axis=1)
        k = int(np.argmin(objs))
        if objs[k] < best_obj - 1e-12 * (1.0 + abs(best_obj)) if np.isfinite(best_obj) else True:
            best_obj, best_coef = float(objs[k]), coefs[k]
    if best_coef is None:
        raise SingularityError("no nonsingular subsystem found")
    return best_coef


def smoothed_qr_fit(X, y, tau, schedule: SmoothingSchedule | None = None, coef0=None,
                    return_info: bool = False):
    """Quantile regression through a sequence of Huber-smoothed problems.

    Each stage warm-starts from the previous minimizer. With the default
    schedule, ``nu_0`` is the robust spread of ``y``, widths shrink by a
    factor 5, and the run stops once ``n * gap_bound(nu)`` falls below
    ``1e-6 * (1 + |objective|)``.
    """
    tau = _tau(tau)
    X, y = _validate_design(X, y)
    if not _full_rank(X):
        raise SingularityError("design matrix is rank deficient")
    if schedule is None:
        schedule = default_schedule(y)
    n = X.shape[0]
    coef = np.linalg.lstsq(X, y, rcond=None)[0] if coef0 is None else np.asarray(coef0, float)
    gram = X.T @ X
    info = {"stages": [], "nu_final": None}
    res = None
    for stage, nu in enumerate(schedule.stages()):
        res = _descent.minimize(X, y, tau, nu, coef, tol=schedule.inner_tol,
                                max_iter=schedule.max_inner, gram=gram, stage=stage)
        coef = res.coef
        chk = check_objective(X, y, coef, tau)
        info["stages"].append({"nu": nu, "objective": res.objective, "check": chk,
                               "iterations": res.iterations, "grad_norm": res.grad_norm})
        info["nu_final"] = nu
        if schedule.reached_precision(tau, nu, n, chk):
            break
    if return_info:
        return coef, info
    return coef


def smoothing_excess_bound(n: int, tau: float, nu: float) -> float:
    """Upper bound on check-objective excess of an exact smoothed minimizer."""
    return n * gap_bound(tau, nu)
