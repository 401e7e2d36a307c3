"""Quantile check loss and its generalized Huber smoothing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


def validate_tau(tau: float) -> float:
    tau = float(tau)
    if not (0.0 < tau < 1.0):
        raise DomainError(f"quantile level must lie in (0, 1), got {tau!r}")
    return tau


@dataclass(frozen=True)
class QuantileLevel:
    tau: float

    def __post_init__(self):
        object.__setattr__(self, "tau", validate_tau(self.tau))

    def __float__(self):
        return self.tau


@dataclass(frozen=True)
class HuberParams:
    """Generalized Huber smoother of the check loss.

    The quadratic zone is ``((tau - 1) * nu, tau * nu]``; outside it the
    function is affine with slopes ``tau - 1`` and ``tau``. ``nu = 0`` is not
    representable here; use :func:`check_loss` for the unsmoothed loss.
    """

    tau: float
    nu: float

    def __post_init__(self):
        object.__setattr__(self, "tau", validate_tau(float(self.tau)))
        nu = float(self.nu)
        if not (np.isfinite(nu) and nu > 0.0):
            raise DomainError(f"smoothing width nu must be finite and > 0, got {nu!r}")
        object.__setattr__(self, "nu", nu)

    @property
    def breakpoints(self) -> tuple[float, float]:
        return (self.tau - 1.0) * self.nu, self.tau * self.nu

    def loss(self, u):
        return huber_loss(u, self)

    def derivative(self, u):
        return huber_derivative(u, self)

    def gap_bound(self) -> float:
        return approximation_gap_bound(self)


def _as_finite(u):
    arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("residuals must be finite")
    return arr


def _unwrap(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def _tau(tau) -> float:
    if isinstance(tau, QuantileLevel):
        return tau.tau
    return validate_tau(tau)


def check_loss(u, tau):
    """``u * (tau - 1{u < 0})``, elementwise."""
    tau = _tau(tau)
    arr = _as_finite(u)
    out = arr * (tau - (arr < 0))
    return _unwrap(out, u)


def _huber(arr, tau, nu):
    lo, hi = (tau - 1.0) * nu, tau * nu
    return np.where(
        arr <= lo,
        arr * (tau - 1.0) - 0.5 * (tau - 1.0) ** 2 * nu,
        np.where(arr <= hi, arr * arr / (2.0 * nu), arr * tau - 0.5 * tau * tau * nu),
    )


def _huber_prime(arr, tau, nu):
    lo, hi = (tau - 1.0) * nu, tau * nu
    # breakpoints go to the quadratic branch; both sides agree there anyway
    return np.where(arr < lo, tau - 1.0, np.where(arr <= hi, arr / nu, tau))


def _clamp_to_check(h, rho, bound):
    # Move h by whole ulps until the rounded gap rho - h lies in [0, bound].
    # The exact gap always does; this keeps the ordering after rounding.
    h = np.array(h, dtype=float)
    for _ in range(8):
        gap = rho - h
        high, low = gap > bound, gap < 0
        if not (high.any() or low.any()):
            break
        h[high] = np.nextafter(h[high], np.inf)
        h[low] = np.nextafter(h[low], -np.inf)
    return h


def huber_loss(u, p: HuberParams):
    """Generalized Huber smoothing of the check loss, elementwise.

    Values are rounded so that ``0 <= check_loss(u) - huber_loss(u)`` and
    the difference never exceeds :func:`approximation_gap_bound`, also in
    floating point (at most a few ulps from the plain formula).
    """
    arr = _as_finite(u)
    rho = arr * (p.tau - (arr < 0))
    h = _clamp_to_check(_huber(arr, p.tau, p.nu), rho, approximation_gap_bound(p))
    return _unwrap(h, u)


def huber_derivative(u, p: HuberParams):
    arr = _as_finite(u)
    return _unwrap(_huber_prime(arr, p.tau, p.nu), u)


def approximation_gap_bound(p: HuberParams) -> float:
    """Sup-norm distance between the check loss and its smoothing.

    The gap ``check - huber`` grows on the quadratic zone and is constant
    beyond it, so the supremum is reached at the breakpoints:
    ``nu / 2 * max(tau, 1 - tau) ** 2``.
    """
    return 0.5 * p.nu * max(p.tau, 1.0 - p.tau) ** 2


def gap_bound(tau: float, nu: float) -> float:
    return approximation_gap_bound(HuberParams(tau, nu))
