"""Curve containers, standardization, fPC and PLS bases, and projection."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    CapacityError,
    DegenerateColumnError,
    ExhaustionError,
    NumericError,
    ShapeError,
)

BASIS_KINDS = ("fPC", "PLS", "PQR", "APQR", "random")


@dataclass(frozen=True, eq=False)
class CurveSet:
    """``n`` curves sampled on a shared grid ``0 = t_1 < ... < t_d = 1``.

    ``center``/``scale`` are set once the set has been standardized and are
    reused to transform new curves. ``grid_range`` keeps the original grid
    endpoints when the grid was rescaled onto ``[0, 1]`` at load time.
    """

    grid: np.ndarray
    curves: np.ndarray
    center: np.ndarray | None = None
    scale: np.ndarray | None = None
    standardized: bool = False
    grid_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float).ravel()
        curves = np.asarray(self.curves, dtype=float)
        if curves.ndim == 1:
            curves = curves[None, :]
        if grid.size < 2:
            raise ShapeError("a curve grid needs at least 2 points")
        if curves.ndim != 2 or curves.shape[1] != grid.size:
            raise ShapeError(f"curves of shape {curves.shape} do not match a grid of {grid.size} points")
        if np.any(np.diff(grid) <= 0):
            raise ShapeError("grid must be strictly increasing")
        if not np.all(np.isfinite(curves)):
            raise ShapeError("curves must be finite")
        if self.scale is not None and np.any(np.asarray(self.scale) <= 0):
            raise ShapeError("scale entries must be positive")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "curves", curves)

    @property
    def n(self) -> int:
        return self.curves.shape[0]

    @property
    def d(self) -> int:
        return self.grid.size

    def subset(self, rows) -> "CurveSet":
        return replace(self, curves=self.curves[rows])

    def same_grid(self, other) -> bool:
        g = other.grid if hasattr(other, "grid") else np.asarray(other)
        return g.shape == self.grid.shape and np.array_equal(g, self.grid)


@dataclass(frozen=True, eq=False)
class BasisMatrix:
    vectors: np.ndarray
    kind: str
    grid: np.ndarray
    values: np.ndarray | None = field(default=None)

    def __post_init__(self):
        C = np.asarray(self.vectors, dtype=float)
        if C.ndim == 1:
            C = C[:, None]
        if self.kind not in BASIS_KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if C.ndim != 2 or C.shape[1] < 1:
            raise ShapeError("a basis needs at least one column")
        grid = np.asarray(self.grid, dtype=float).ravel()
        if C.shape[0] != grid.size:
            raise ShapeError(f"basis has {C.shape[0]} rows but the grid has {grid.size} points")
        if not np.all(np.isfinite(C)):
            raise NumericError("basis vectors must be finite")
        object.__setattr__(self, "vectors", C)
        object.__setattr__(self, "grid", grid)

    @property
    def K(self) -> int:
        return self.vectors.shape[1]

    @property
    def d(self) -> int:
        return self.vectors.shape[0]


def standardize(raw: CurveSet) -> CurveSet:
    """Center and scale every grid column (sample sd, divisor ``n - 1``)."""
    Z = raw.curves
    if Z.shape[0] < 2:
        raise DegenerateColumnError("standardizing needs at least two curves", index=0)
    center = Z.mean(axis=0)
    scale = Z.std(axis=0, ddof=1)
    bad = np.flatnonzero(~(scale > 1e-14 * (1.0 + np.abs(center))))
    if bad.size:
        j = int(bad[0])
        raise DegenerateColumnError(f"grid column {j} (t={raw.grid[j]:.6g}) has zero variance", index=j)
    return replace(raw, curves=(Z - center) / scale, center=center, scale=scale, standardized=True)


def apply_standardization(raw: CurveSet, reference: CurveSet) -> CurveSet:
    """Transform ``raw`` with the center/scale stored on ``reference``."""
    if not reference.same_grid(raw):
        raise ShapeError("grid of new curves differs from the training grid")
    if reference.center is None or reference.scale is None:
        raise ShapeError("reference curve set carries no standardization")
    return replace(raw, curves=(raw.curves - reference.center) / reference.scale,
                   center=reference.center, scale=reference.scale, standardized=True)


def canonical_order(C) -> np.ndarray:
    """Column order putting first-row entries in descending order.

    Ties fall through to the second row, then the third, and so on; exact
    duplicate columns keep their original relative order.
    """
    C = np.asarray(C, dtype=float)
    order = np.lexsort(-C[::-1])
    K = C.shape[1]
    if K > 1:
        Cs = C[:, order]
        dup = np.all(Cs[:, 1:] == Cs[:, :-1], axis=0)
        if np.any(dup):
            warnings.warn("basis has identical columns; kept in original order", stacklevel=3)
    return order


def canonicalize(C: BasisMatrix) -> BasisMatrix:
    order = canonical_order(C.vectors)
    values = None if C.values is None else np.asarray(C.values)[order]
    return replace(C, vectors=C.vectors[:, order], values=values)


def _fix_sign(v):
    k = int(np.argmax(np.abs(v)))
    return -v if v[k] < 0 else v


def fpc_eigen(Z: CurveSet):
    """All eigenpairs of the sample covariance, eigenvalues descending."""
    X = Z.curves - Z.curves.mean(axis=0)
    cov = X.T @ X / (Z.n - 1)
    try:
        vals, vecs = np.linalg.eigh(cov)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericError(f"eigen-decomposition failed: {exc}") from exc
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = np.column_stack([_fix_sign(vecs[:, j]) for j in order])
    return vals, vecs


def _check_K(Z: CurveSet, K: int):
    K = int(K)
    if K < 1 or K > min(Z.n - 1, Z.d):
        raise CapacityError(f"K={K} must lie in [1, min(n-1, d)] = [1, {min(Z.n - 1, Z.d)}]")
    return K


def fpc_basis(Z: CurveSet, K: int) -> BasisMatrix:
    K = _check_K(Z, K)
    vals, vecs = fpc_eigen(Z)
    B = BasisMatrix(vecs[:, :K], "fPC", Z.grid, values=vals[:K])
    return canonicalize(B)


def _partial_out(X, y):
    n = y.shape[0]
    A = np.ones((n, 1)) if X is None or X.size == 0 else np.column_stack([np.ones(n), X])
    coef = np.linalg.lstsq(A, y, rcond=None)[0]
    return y - A @ coef


def pls_basis(Z: CurveSet, X, y, K: int) -> BasisMatrix:
    """Least-squares functional PLS with NIPALS deflation.

    The intercept and scalar covariates are partialled out of ``y`` first.
    Returned columns are the rotations ``R = W (P'W)^{-1}`` (unit norm), so
    that ``Z @ R`` reproduces the mutually orthogonal PLS scores directly.
    """
    K = _check_K(Z, K)
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != Z.n:
        raise ShapeError("response length does not match number of curves")
    E = Z.curves - Z.curves.mean(axis=0)
    r = _partial_out(None if X is None else np.asarray(X, float).reshape(Z.n, -1), y)
    tol = 1e-10 * max(np.linalg.norm(E), 1e-300) * max(np.linalg.norm(y - y.mean()), 1.0)
    W, P = [], []
    for k in range(K):
        w = E.T @ r
        nw = np.linalg.norm(w)
        if nw <= tol:
            raise ExhaustionError(f"partial covariance vanished after {k} components", rank=k)
        w = w / nw
        t = E @ w
        tt = t @ t
        p = E.T @ t / tt
        E = E - np.outer(t, p)
        r = r - t * (t @ r) / tt
        W.append(w)
        P.append(p)
    W = np.column_stack(W)
    P = np.column_stack(P)
    R = W @ np.linalg.inv(P.T @ W)
    R = R / np.linalg.norm(R, axis=0)
    return canonicalize(BasisMatrix(R, "PLS", Z.grid))


def project(Z: CurveSet, C: BasisMatrix) -> np.ndarray:
    """Scores ``Z @ C`` (plain dot products, one column at a time)."""
    if not Z.same_grid(C.grid):
        raise ShapeError("curve grid differs from the basis grid")
    V = C.vectors
    return np.column_stack([np.dot(Z.curves, V[:, k]) for k in range(V.shape[1])])


def exact_rowsum(M) -> np.ndarray:
    """Correctly rounded row sums; independent of column order."""
    M = np.asarray(M, dtype=float)
    return np.array([math.fsum(row) for row in M])
