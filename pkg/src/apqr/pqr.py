"""Alternative partial quantile regression (APQR) by block relaxation.

The smoothed objective is

    l_N(alpha, beta, C) = -sum_i H_{nu_N, tau}(y_i - alpha - x_i'beta - z_i'C 1_K)

and it is maximized alternately over ``C`` and ``(alpha, beta)`` for each
width ``nu_N`` of a decreasing schedule, warm-starting every stage from the
previous one.

``l_N`` depends on ``C`` only through the row sums ``C 1_K``. The C-block is
therefore solved over ``cbar = C 1_K`` and the change is spread evenly over
the ``K`` columns, which is the maximizer closest to the current ``C`` and
the same point a gradient method in ``vec(C)`` would reach (every column
receives the same gradient).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _descent
from .basis import (
    BasisMatrix,
    CurveSet,
    canonical_order,
    canonicalize,
    exact_rowsum,
    fpc_basis,
    pls_basis,
    project,
    standardize,
)
from .errors import CapacityError, ConvergenceError, MonotonicityError, ShapeError
from .loss import _huber, _huber_prime, _tau, check_loss
from .schedule import SmoothingSchedule, default_schedule

MONOTONE_SLACK = 1e-8
_POLISH_ITER = 50


@dataclass
class PqrState:
    alpha: float
    beta: np.ndarray
    C: BasisMatrix
    objective: float
    stage: int
    pass_index: int
    nu: float


@dataclass
class ApqrTrace:
    """Objective values after every block update.

    Each entry is a dict with keys ``stage``, ``pass``, ``block`` (one of
    ``init``, ``start``, ``C``, ``ab``, ``polish``), ``nu`` and ``objective``.
    """

    entries: list = field(default_factory=list)
    states: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def add(self, stage, pass_index, block, nu, objective):
        self.entries.append({"stage": stage, "pass": pass_index, "block": block,
                             "nu": nu, "objective": objective})

    def objectives(self, stage=None) -> np.ndarray:
        return np.array([e["objective"] for e in self.entries
                         if stage is None or e["stage"] == stage])

    def stages(self) -> list:
        return sorted({e["stage"] for e in self.entries})

    def is_monotone(self, slack: float = 1e-9) -> bool:
        return all(np.all(np.diff(self.objectives(s)) >= -slack) for s in self.stages())


def _as_matrix(Z):
    if isinstance(Z, CurveSet):
        return Z.curves
    Z = np.asarray(Z, dtype=float)
    return Z[:, None] if Z.ndim == 1 else Z


def _as_covariates(X, n):
    if X is None:
        return np.zeros((n, 0))
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != n:
        raise ShapeError(f"scalar covariates have {X.shape[0]} rows, expected {n}")
    return X


def _vectors(C):
    return C.vectors if isinstance(C, BasisMatrix) else np.asarray(C, dtype=float)


def residuals(alpha, beta, C, Z, X, y) -> np.ndarray:
    Z = _as_matrix(Z)
    V = _vectors(C)
    if V.ndim == 1:
        V = V[:, None]
    n = Z.shape[0]
    X = _as_covariates(X, n)
    y = np.asarray(y, dtype=float).ravel()
    beta = np.asarray(beta, dtype=float).ravel()
    if V.shape[0] != Z.shape[1] or y.shape[0] != n or beta.shape[0] != X.shape[1]:
        raise ShapeError("inconsistent shapes among C, curves, covariates and responses")
    return y - alpha - X @ beta - Z @ exact_rowsum(V)


def objective_lN(alpha, beta, C, Z, X, y, tau, nu) -> float:
    """``-sum_i H(r_i)``; never positive."""
    tau = _tau(tau)
    if not nu > 0:
        raise ValueError("nu must be positive")
    r = residuals(alpha, beta, C, Z, X, y)
    return -float(np.sum(_huber(r, tau, nu)))


def objective_l(alpha, beta, C, Z, X, y, tau) -> float:
    """Unsmoothed counterpart: ``-sum_i rho_tau(r_i)``."""
    return -float(np.sum(check_loss(residuals(alpha, beta, C, Z, X, y), tau)))


def eta_gradient(z_i, K: int) -> np.ndarray:
    """Gradient of the residual ``r_i`` with respect to ``vec(C)``: ``-1_K (x) z_i``."""
    z_i = np.asarray(z_i, dtype=float).ravel()
    return -np.kron(np.ones(int(K)), z_i)


def score(state: PqrState, Z, X, y, tau, nu=None) -> np.ndarray:
    """Gradient of ``l_N`` with respect to ``vec(C)`` (column-major)."""
    tau = _tau(tau)
    nu = state.nu if nu is None else nu
    r = residuals(state.alpha, state.beta, state.C, Z, X, y)
    h = _huber_prime(r, tau, nu)
    return np.tile(_as_matrix(Z).T @ h, state.C.K)


def ab_gradient(state: PqrState, Z, X, y, tau, nu=None) -> np.ndarray:
    """Gradient of ``l_N`` with respect to ``(alpha, beta)``."""
    tau = _tau(tau)
    nu = state.nu if nu is None else nu
    r = residuals(state.alpha, state.beta, state.C, Z, X, y)
    h = _huber_prime(r, tau, nu)
    A = np.column_stack([np.ones(r.size), _as_covariates(X, r.size)])
    return A.T @ h


def information(state: PqrState, Z, X, y, tau, nu=None, mode: str = "per_sample") -> np.ndarray:
    """Information matrix of ``l_N`` in ``vec(C)``.

    ``per_sample`` sums ``s_i s_i'`` over observations. ``literal`` keeps the
    double sum over ``(i, j)`` pairs, which collapses to the outer product of
    the total score.
    """
    tau = _tau(tau)
    nu = state.nu if nu is None else nu
    Zm = _as_matrix(Z)
    r = residuals(state.alpha, state.beta, state.C, Zm, X, y)
    h = _huber_prime(r, tau, nu)
    K = state.C.K
    if mode == "per_sample":
        G = (Zm * (h * h)[:, None]).T @ Zm
        G = 0.5 * (G + G.T)
        return np.kron(np.ones((K, K)), G)
    if mode == "literal":
        s = np.tile(Zm.T @ h, K)
        return np.outer(s, s)
    raise ValueError(f"unknown information mode {mode!r}")


def _check_monotone(before, after, trace, stage, block):
    if after < before - MONOTONE_SLACK:
        raise MonotonicityError(
            f"{block}-block update lowered l_N from {before!r} to {after!r} at stage {stage}",
            stage=stage, trace=trace)


def relax(Z, X, y, tau, C0, schedule: SmoothingSchedule, ab0=None, polish_steps=True):
    """Run the block relaxation loop on already standardized curves.

    Parameters
    ----------
    Z : (n, d) curve matrix.
    X : (n, p) scalar covariates or None.
    y : (n,) responses.
    C0 : (d, K) initial basis.
    ab0 : optional initial ``(alpha, beta)``; by default the (alpha, beta)
        block is maximized at ``C0`` before the first pass.
    polish_steps : after each pass, take a joint Newton step on ``l_N`` over
        ``(alpha, beta, C 1_K)`` and keep it if it raises ``l_N``. Without it
        the two blocks zig-zag for thousands of passes once ``nu`` is small
        and the active set couples the intercept with ``C 1_K``.

    Returns
    -------
    state : PqrState at the last saved point.
    trace : ApqrTrace with every objective value visited.
    """
    tau = _tau(tau)
    Zm = _as_matrix(Z)
    n, d = Zm.shape
    X = _as_covariates(X, n)
    y = np.asarray(y, dtype=float).ravel()
    C = np.array(C0, dtype=float, copy=True)
    if C.ndim == 1:
        C = C[:, None]
    if C.shape[0] != d:
        raise ShapeError(f"initial basis has {C.shape[0]} rows, curves have {d} columns")
    K = C.shape[1]
    grid = Z.grid if isinstance(Z, CurveSet) else np.linspace(0.0, 1.0, d) if d > 1 else np.zeros(1)
    A = np.column_stack([np.ones(n), X])
    gramZ = Zm.T @ Zm
    gramA = A.T @ A
    absY, absA, absZ = np.abs(y), np.abs(A), np.abs(Zm)
    cbar = exact_rowsum(C)
    trace = ApqrTrace()
    tol = schedule.inner_tol
    cap = schedule.max_inner

    def lN(ab, cb, nu):
        r = y - A @ ab - Zm @ cb
        return -_descent.smoothed_objective(r, tau, nu)

    def ab_step(ab, nu, stage):
        res = _descent.minimize(A, y - Zm @ cbar, tau, nu, ab, tol=tol, max_iter=cap,
                                gram=gramA, stage=stage, magnitude=absY + absZ @ np.abs(cbar))
        return res.coef

    def c_step(nu, stage):
        nonlocal C, cbar
        target = y - A @ ab
        res = _descent.minimize(Zm, target, tau, nu, cbar, tol=tol, max_iter=cap,
                                gram=gramZ, stage=stage, magnitude=absY + absA @ np.abs(ab))
        C = C + ((res.coef - cbar) / K)[:, None]
        cbar = exact_rowsum(C)

    D_joint = np.column_stack([A, Zm])
    gram_joint = D_joint.T @ D_joint
    q = A.shape[1]

    def joint_grad_norm(ab, cb, nu):
        r = y - A @ ab - Zm @ cb
        return float(np.max(np.abs(D_joint.T @ _huber_prime(r, tau, nu))))

    def polish(ab, obj, nu, stage, p):
        # joint Newton step over (alpha, beta, c-bar); kept only if l_N improves
        nonlocal C, cbar
        start = np.concatenate([ab, cbar])
        try:
            res = _descent.minimize(D_joint, y, tau, nu, start, tol=tol, max_iter=_POLISH_ITER,
                                    gram=gram_joint, stage=stage, magnitude=absY)
            coef = res.coef
        except ConvergenceError:
            return ab, obj
        new_C = C + ((coef[q:] - cbar) / K)[:, None]
        new_cbar = exact_rowsum(new_C)
        new_ab = coef[:q]
        new = lN(new_ab, new_cbar, nu)
        if new < obj:
            return ab, obj
        if new == obj and joint_grad_norm(new_ab, new_cbar, nu) >= joint_grad_norm(ab, cbar, nu):
            return ab, obj
        C, cbar = new_C, new_cbar
        trace.add(stage, p, "polish", nu, new)
        return new_ab, new

    def c_score_norm(ab, nu):
        r = y - A @ ab - Zm @ cbar
        return float(np.max(np.abs(Zm.T @ _huber_prime(r, tau, nu))))

    def stationary(ab, nu, obj):
        thresh = _descent.stationarity_threshold(D_joint, y, np.concatenate([ab, cbar]), tau,
                                                 nu, tol, obj, magnitude=absY)
        return joint_grad_norm(ab, cbar, nu) <= 10 * thresh

    stages = schedule.stages()
    nu = stages[0]
    if ab0 is None:
        ab = np.linalg.lstsq(A, y - Zm @ cbar, rcond=None)[0]
        ab = ab_step(ab, nu, 0)
    else:
        ab = np.asarray(ab0, dtype=float).ravel()
    obj = lN(ab, cbar, nu)
    trace.add(0, -1, "init", nu, obj)

    saved_prev = None
    state = None
    for N, nu in enumerate(stages):
        obj = lN(ab, cbar, nu)
        if N > 0:
            trace.add(N, -1, "start", nu, obj)
        eps = schedule.outer_tol * (1.0 + abs(obj))
        for p in range(schedule.max_passes):
            start = obj
            c_step(nu, N)
            new = lN(ab, cbar, nu)
            _check_monotone(obj, new, trace, N, "C")
            trace.add(N, p, "C", nu, new)
            obj = new
            ab = ab_step(ab, nu, N)
            new = lN(ab, cbar, nu)
            _check_monotone(obj, new, trace, N, "ab")
            trace.add(N, p, "ab", nu, new)
            obj = new
            if polish_steps:
                ab, obj = polish(ab, obj, nu, N, p)
            if obj - start < eps and stationary(ab, nu, obj):
                break
        else:
            raise ConvergenceError(
                f"block relaxation did not settle within {schedule.max_passes} passes "
                f"at stage {N}", stage=N, grad_norm=c_score_norm(ab, nu), trace=trace)
        state = PqrState(alpha=float(ab[0]), beta=ab[1:].copy(),
                         C=BasisMatrix(C.copy(), "APQR", grid),
                         objective=obj, stage=N, pass_index=p, nu=nu)
        trace.states.append(state)
        check = float(np.sum(check_loss(y - A @ ab - Zm @ cbar, tau)))
        if schedule.reached_precision(tau, nu, n, check):
            break
        if saved_prev is not None and abs(obj - saved_prev) < eps:
            break
        saved_prev = obj
    return state, trace


def random_init(d: int, K: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((d, K))


def initial_basis(init, Zs: CurveSet, X, y, K: int, seed=0) -> np.ndarray:
    """Resolve an initialization choice into a canonicalized ``d x K`` matrix.

    ``init`` may be a BasisMatrix, a ``(d, K)`` array, an integer seed, or one
    of ``"random"``, ``"fpc"``, ``"pls"``.
    """
    if init is None or (isinstance(init, str) and init == "random"):
        C0 = random_init(Zs.d, K, seed)
    elif isinstance(init, (int, np.integer)) and not isinstance(init, bool):
        C0 = random_init(Zs.d, K, int(init))
    elif isinstance(init, str):
        if init == "fpc":
            C0 = fpc_basis(Zs, K).vectors
        elif init == "pls":
            C0 = pls_basis(Zs, X, y, K).vectors
        else:
            raise ValueError(f"unknown initialization {init!r}")
    else:
        C0 = _vectors(init)
    C0 = np.asarray(C0, dtype=float)
    if C0.ndim == 1:
        C0 = C0[:, None]
    if C0.shape != (Zs.d, K):
        raise ShapeError(f"initial basis has shape {C0.shape}, expected {(Zs.d, K)}")
    return C0[:, canonical_order(C0)]


def fit_apqr(Z: CurveSet, X, y, tau, K: int, schedule: SmoothingSchedule | None = None,
             init=None, seed=0):
    """Extract a K-column APQR basis and refit the projected quantile model.

    Curves are standardized first (unless already standardized). After the
    relaxation loop converges the basis is canonicalized, the curves are
    projected onto it, and ``(alpha, beta, gamma)`` are refit by smoothed
    quantile regression on the scores plus scalar covariates.

    Returns
    -------
    trace : ApqrTrace of the relaxation (``trace.states[-1]`` is the saved state).
    model : FittedQuantileModel.
    """
    from .model import FittedQuantileModel, linear_predictor, refit_quantile

    tau = _tau(tau)
    y = np.asarray(y, dtype=float).ravel()
    Zs = Z if Z.standardized else standardize(Z)
    K = int(K)
    if K < 1 or K > min(Zs.n - 1, Zs.d):
        raise CapacityError(f"K={K} must lie in [1, min(n-1, d)] = [1, {min(Zs.n - 1, Zs.d)}]")
    X = _as_covariates(X, Zs.n)
    if schedule is None:
        schedule = default_schedule(y)
    C0 = initial_basis(init, Zs, X, y, K, seed=seed)
    state, trace = relax(Zs, X, y, tau, C0, schedule)
    basis = canonicalize(BasisMatrix(state.C.vectors, "APQR", Zs.grid))
    S = project(Zs, basis)
    alpha, beta, gamma = refit_quantile(S, X, y, tau)
    center = Zs.center if Zs.center is not None else np.zeros(Zs.d)
    scale = Zs.scale if Zs.scale is not None else np.ones(Zs.d)
    model = FittedQuantileModel(tau=tau, alpha=alpha, beta=beta, basis=basis, gamma=gamma,
                                center=center, scale=scale, method="apqr", seed=seed,
                                grid_range=Z.grid_range)
    model.trace = trace
    model.fitted = linear_predictor(model, X, S)
    return trace, model
