"""Fitted projected quantile models: fitting pipeline and prediction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import (
    BasisMatrix,
    CurveSet,
    apply_standardization,
    exact_rowsum,
    fpc_basis,
    pls_basis,
    project,
    standardize,
)
from .errors import ShapeError
from .loss import _tau, check_loss
from .oracle import smoothed_qr_fit

METHODS = ("apqr", "fpc", "pls")


@dataclass(eq=False)
class FittedQuantileModel:
    """Everything needed to predict conditional quantiles on new curves.

    Prediction is ``alpha + x'beta + (standardize(z) @ C) @ gamma``.
    """

    tau: float
    alpha: float
    beta: np.ndarray
    basis: BasisMatrix
    gamma: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    method: str
    seed: int | None = None
    grid_range: tuple = (0.0, 1.0)
    fitted: np.ndarray | None = field(default=None, repr=False)
    trace: object = field(default=None, repr=False)

    def __post_init__(self):
        self.alpha = float(self.alpha)
        self.beta = np.asarray(self.beta, dtype=float).ravel()
        self.gamma = np.asarray(self.gamma, dtype=float).ravel()
        self.center = np.asarray(self.center, dtype=float).ravel()
        self.scale = np.asarray(self.scale, dtype=float).ravel()
        if self.gamma.size != self.basis.K:
            raise ShapeError("gamma length must equal the number of basis columns")
        if self.center.size != self.basis.d or self.scale.size != self.basis.d:
            raise ShapeError("standardization vectors must match the grid")

    @property
    def K(self) -> int:
        return self.basis.K

    @property
    def p(self) -> int:
        return self.beta.size

    @property
    def grid(self) -> np.ndarray:
        return self.basis.grid

    def predict(self, X, Z: CurveSet) -> np.ndarray:
        return predict(self, X, Z)


def _covariates(X, n, p):
    if p == 0:
        if X is not None and np.asarray(X).size and np.asarray(X).reshape(n, -1).shape[1] > 0:
            raise ShapeError("model was fit without scalar covariates")
        return np.zeros((n, 0))
    if X is None:
        raise ShapeError(f"model needs {p} scalar covariates per row")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape != (n, p):
        raise ShapeError(f"scalar covariates have shape {X.shape}, expected {(n, p)}")
    return X


def linear_predictor(model: FittedQuantileModel, X, scores) -> np.ndarray:
    """Correctly rounded ``alpha + x'beta + scores @ gamma`` per row.

    The sum is order independent, so permuting basis columns together with
    ``gamma`` leaves predictions bitwise unchanged.
    """
    scores = np.asarray(scores, dtype=float)
    n = scores.shape[0]
    X = _covariates(X, n, model.p)
    terms = np.column_stack([np.full(n, model.alpha), X * model.beta, scores * model.gamma])
    return exact_rowsum(terms)


def predict(model: FittedQuantileModel, X, Z: CurveSet) -> np.ndarray:
    if not Z.same_grid(model.grid):
        raise ShapeError("grid of new curves differs from the training grid")
    ref = CurveSet(model.grid, np.zeros((1, model.basis.d)), center=model.center,
                   scale=model.scale, standardized=True)
    Zs = apply_standardization(Z, ref)
    return linear_predictor(model, X, project(Zs, model.basis))


def _independent_scores(base, scores):
    """Indices of score columns that add rank to ``base``, scanned left to right."""
    keep = []
    rank = np.linalg.matrix_rank(base)
    for k in range(scores.shape[1]):
        trial = np.column_stack([base, scores[:, keep + [k]]])
        r = np.linalg.matrix_rank(trial)
        if r > rank:
            keep.append(k)
            rank = r
    return keep


def refit_quantile(scores, X, y, tau, schedule=None):
    """Smoothed quantile regression of ``y`` on ``[1, X, scores]``.

    Score columns that are linear combinations of earlier columns (for
    example an all-zero column when ``C 1_K`` vanished) get ``gamma = 0``.
    """
    scores = np.asarray(scores, dtype=float)
    n = scores.shape[0]
    X = np.zeros((n, 0)) if X is None else np.asarray(X, dtype=float).reshape(n, -1)
    base = np.column_stack([np.ones(n), X])
    keep = _independent_scores(base, scores)
    coef = smoothed_qr_fit(np.column_stack([base, scores[:, keep]]), y, tau, schedule=schedule)
    p = X.shape[1]
    gamma = np.zeros(scores.shape[1])
    gamma[keep] = coef[1 + p:]
    return float(coef[0]), coef[1:1 + p], gamma


def refit_least_squares(scores, X, y):
    scores = np.asarray(scores, dtype=float)
    n = scores.shape[0]
    X = np.zeros((n, 0)) if X is None else np.asarray(X, dtype=float).reshape(n, -1)
    D = np.column_stack([np.ones(n), X, scores])
    coef = np.linalg.lstsq(D, np.asarray(y, dtype=float), rcond=None)[0]
    p = X.shape[1]
    return float(coef[0]), coef[1:1 + p], coef[1 + p:]


def fit_model(Z: CurveSet, X, y, tau, K: int, method: str = "apqr", seed: int = 0,
              schedule=None, init=None) -> FittedQuantileModel:
    """Standardize, extract a K-column basis, refit, and return the model.

    ``method`` is ``"apqr"`` (block relaxation basis, quantile refit),
    ``"fpc"`` (principal components, quantile refit) or ``"pls"``
    (least-squares PLS basis with a least-squares refit).
    """
    tau = _tau(tau)
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != Z.n:
        raise ShapeError(f"{y.shape[0]} responses for {Z.n} curves")
    if method == "apqr":
        from .pqr import fit_apqr

        _, model = fit_apqr(Z, X, y, tau, K, schedule=schedule, init=init, seed=seed)
        return model
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    Zs = standardize(Z)
    n = Z.n
    Xm = None if X is None else np.asarray(X, dtype=float).reshape(n, -1)
    if method == "fpc":
        basis = fpc_basis(Zs, K)
        S = project(Zs, basis)
        alpha, beta, gamma = refit_quantile(S, Xm, y, tau, schedule=schedule)
    else:
        basis = pls_basis(Zs, Xm, y, K)
        S = project(Zs, basis)
        alpha, beta, gamma = refit_least_squares(S, Xm, y)
    model = FittedQuantileModel(tau=tau, alpha=alpha, beta=beta, basis=basis, gamma=gamma,
                                center=Zs.center, scale=Zs.scale, method=method, seed=seed,
                                grid_range=Z.grid_range)
    model.fitted = linear_predictor(model, Xm, S)
    return model


def mean_check_loss(y, yhat, tau) -> float:
    return float(np.mean(check_loss(np.asarray(y, float) - np.asarray(yhat, float), tau)))


def mae(y, yhat) -> float:
    return float(np.mean(np.abs(np.asarray(y, float) - np.asarray(yhat, float))))
