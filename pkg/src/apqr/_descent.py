"""Smoothed quantile regression by damped Newton steps with Armijo backtracking.

Minimizes ``f(b) = sum_i H(target_i - D_i b)``. The search direction solves
``(D_A' D_A + lam * D' D + mu I) s = -nu * g`` where ``A`` is the set of rows on
the quadratic branch; the matrix is positive definite on the row space of
``D`` and ``g`` lies in that row space, so ``s`` is a descent direction even
when ``D`` is rank deficient. ``lam`` adapts Levenberg-Marquardt style: it
shrinks after full steps and grows when the line search has to backtrack.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import ConvergenceError
from .loss import _huber, _huber_prime

_MAX_STALLS = 20
_ARMIJO = 1e-4
_LAM_MIN = 1e-8
_LAM_MAX = 1e4
_MAX_HALVINGS = 80


@dataclass
class DescentResult:
    coef: np.ndarray
    objective: float
    grad_norm: float
    iterations: int


def smoothed_objective(residual, tau, nu) -> float:
    return float(np.sum(_huber(residual, tau, nu)))


def gradient(D, residual, tau, nu):
    return -(D.T @ _huber_prime(residual, tau, nu))


def _rounding_floor(absD, magnitude, b, active, nu) -> float:
    """Gradient noise from rounding residuals on the quadratic branch.

    A residual carries absolute error about ``eps * (m_i + |D_i||b|)`` where
    ``m_i`` bounds the terms the target was computed from; divided by ``nu``
    it enters the gradient through ``|D_i|``. Below this level the gradient
    tolerance is not resolvable in double precision.
    """
    if not np.any(active):
        return 0.0
    Da = absD[active]
    err = 64 * np.finfo(float).eps * (magnitude[active] + Da @ np.abs(b)) / nu
    return float(np.max(Da.T @ err))


def stationarity_threshold(D, target, coef, tau, nu, tol, objective, magnitude=None) -> float:
    """Gradient level that counts as stationary: relative tolerance plus rounding floor."""
    D = np.asarray(D, dtype=float)
    r = target - D @ coef
    active = (r > (tau - 1.0) * nu) & (r <= tau * nu)
    mag = np.abs(target) if magnitude is None else magnitude
    return tol * (1.0 + abs(objective)) + _rounding_floor(np.abs(D), mag, coef, active, nu)


def minimize(D, target, tau, nu, coef0, *, tol=1e-8, max_iter=500, gram=None, stage=None,
             magnitude=None):
    """Minimize the smoothed quantile objective over ``coef``.

    ``magnitude`` (per row) bounds the terms ``target`` was computed from and
    sets the rounding floor of the gradient test; defaults to ``|target|``.

    Raises ConvergenceError when the gradient tolerance is not met within
    ``max_iter`` iterations or the line search cannot make progress.
    """
    D = np.asarray(D, dtype=float)
    q = D.shape[1]
    b = np.array(coef0, dtype=float, copy=True)
    if gram is None:
        gram = D.T @ D
    scale = max(float(np.max(np.diag(gram))), 1e-300) if q else 1.0
    mu = 1e-13 * scale
    r = target - D @ b
    f = smoothed_objective(r, tau, nu)
    lo, hi = (tau - 1.0) * nu, tau * nu
    gnorm = np.inf
    absD = np.abs(D)
    mag = np.abs(target) if magnitude is None else np.asarray(magnitude, dtype=float)
    lam = 1e-4
    stalls = 0
    for it in range(max_iter + 1):
        g = gradient(D, r, tau, nu)
        gnorm = float(np.max(np.abs(g))) if q else 0.0
        active = (r > lo) & (r <= hi)
        thresh = tol * (1.0 + abs(f)) + _rounding_floor(absD, mag, b, active, nu)
        if gnorm <= thresh:
            return DescentResult(b, f, gnorm, it)
        if it == max_iter:
            break
        Da = D[active]
        M = Da.T @ Da + lam * gram
        M[np.diag_indices_from(M)] += mu
        try:
            with warnings.catch_warnings():
                # mu keeps M positive definite; near-singular M only slows progress
                warnings.simplefilter("ignore", linalg.LinAlgWarning)
                step = linalg.solve(M, -nu * g, assume_a="pos", check_finite=False)
        except (linalg.LinAlgError, ValueError):
            step = linalg.lstsq(M, -nu * g, check_finite=False)[0]
        slope = float(g @ step)
        if not slope < 0:
            step = -g
            slope = -float(g @ g)
        Ds = D @ step
        t = 1.0
        for _ in range(_MAX_HALVINGS):
            r_new = r - t * Ds
            f_new = smoothed_objective(r_new, tau, nu)
            if f_new <= f + _ARMIJO * t * slope:
                break
            t *= 0.5
        else:
            # no sufficient decrease: accept only if we are at float resolution
            if gnorm <= 1e3 * thresh:
                return DescentResult(b, f, gnorm, it)
            raise ConvergenceError(
                f"line search failed at stage {stage}, gradient norm {gnorm:.3e}",
                stage=stage,
                grad_norm=gnorm,
            )
        b_new = b + t * step
        r_new = target - D @ b_new
        f_new = smoothed_objective(r_new, tau, nu)
        progress = f_new < f
        if f_new == f:
            # objective flat at double precision: judge the step by the gradient
            g_new = gradient(D, r_new, tau, nu)
            progress = float(np.max(np.abs(g_new))) < gnorm
        if progress:
            stalls = 0
            lam = max(lam * 0.1, _LAM_MIN) if t == 1.0 else min(lam * 10.0, _LAM_MAX)
            b, r, f = b_new, r_new, f_new
            continue
        stalls += 1
        lam = min(lam * 10.0, _LAM_MAX)
        if stalls > _MAX_STALLS:
            if gnorm <= 1e3 * thresh:
                return DescentResult(b, f, gnorm, it)
            break
    raise ConvergenceError(
        f"no convergence within {max_iter} iterations at stage {stage}, "
        f"gradient norm {gnorm:.3e}",
        stage=stage,
        grad_norm=gnorm,
    )


def line_minimize(residual, direction, tau, nu, max_expand=60, iters=200) -> float:
    """Step ``s >= 0`` minimizing ``sum_i H(r_i - s * u_i)``.

    The objective is convex in ``s``; its derivative is bracketed by doubling
    and then bisected.
    """

    def slope(s):
        return -float(direction @ _huber_prime(residual - s * direction, tau, nu))

    if not slope(0.0) < 0:
        return 0.0
    lo, hi = 0.0, 1.0
    for _ in range(max_expand):
        if slope(hi) >= 0:
            break
        lo, hi = hi, 2.0 * hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if slope(mid) < 0:
            lo = mid
        else:
            hi = mid
    return lo
