"""Data-generating processes for the two simulation designs and the study runner."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import CurveSet, fpc_eigen
from .errors import ApqrError, DomainError, MissingSourceError
from .model import fit_model, mae

SIM1_TERMS = 50
SIM2_TERMS = 20
SIM2_PATTERNS = {1: range(1, 6), 2: range(6, 11), 3: range(11, 16), 4: range(16, 21)}
SIM2_TEST_FRACTION = 200 / 1717


@dataclass(frozen=True, eq=False)
class SimSpec:
    """Parameters of one simulation design.

    ``kind`` is ``"cosine"`` (Simulation I) or ``"curve_driven"``
    (Simulation II). ``error`` is ``"gaussian"``, ``"cauchy"`` or ``"none"``;
    ``error_scale`` is the Gaussian sd or the Cauchy scale (Simulation I).
    For the curve-driven design the noise sd is ``noise_multiplier`` times the
    sd of the noiseless responses.
    """

    kind: str = "cosine"
    n: int = 300
    d: int = 120
    error: str = "gaussian"
    error_scale: float = 1.0
    seed: int = 0
    J: int | None = None
    source: CurveSet | None = None
    pattern: int = 1
    noise_multiplier: float = math.sqrt(5.0)
    test_fraction: float | None = None

    def __post_init__(self):
        if self.kind not in ("cosine", "curve_driven"):
            raise DomainError(f"unknown simulation kind {self.kind!r}")
        if self.error not in ("gaussian", "cauchy", "none"):
            raise DomainError(f"unknown error distribution {self.error!r}")
        if self.n < 20:
            raise DomainError("simulations need n >= 20")
        if self.kind == "cosine":
            if self.d < 2:
                raise DomainError("simulations need d >= 2")
            if self.terms > self.d:
                raise DomainError(f"J={self.terms} cosine terms exceed d={self.d}")
        elif self.pattern not in SIM2_PATTERNS:
            raise DomainError(f"pattern must be one of 1..4, got {self.pattern}")

    @property
    def terms(self) -> int:
        if self.J is not None:
            return self.J
        return SIM1_TERMS if self.kind == "cosine" else SIM2_TERMS

    @property
    def split_fraction(self) -> float:
        if self.test_fraction is not None:
            return self.test_fraction
        return 0.2 if self.kind == "cosine" else SIM2_TEST_FRACTION

    def with_seed(self, seed: int) -> "SimSpec":
        return replace(self, seed=seed)


@dataclass(eq=False)
class Replicate:
    train: tuple
    test: tuple
    true_gamma: np.ndarray
    seed: int
    noise_scale: float | None = None
    signal: dict = field(default_factory=dict)


def sim1_coefficients(J: int = SIM1_TERMS) -> np.ndarray:
    j = np.arange(1, J + 1)
    g = (20.0 / 3.0) * (-1.0) ** (j + 1) * j ** -2.0
    g[0] = 0.5
    return g


def sim1_score_sd(J: int = SIM1_TERMS) -> np.ndarray:
    j = np.arange(1, J + 1)
    return (-1.0) ** (j + 1) * j ** -0.55


def cosine_basis(grid, J: int) -> np.ndarray:
    j = np.arange(1, J + 1)
    return math.sqrt(2.0) * np.cos(np.pi * np.outer(grid, j))


def integrate(curves, weights_curve, grid) -> np.ndarray:
    """Trapezoid rule for ``int w(t) z_i(t) dt`` on each row."""
    return np.trapezoid(curves * weights_curve, grid, axis=1)


def _split(n, frac, rng):
    perm = rng.permutation(n)
    n_test = int(round(n * frac))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def _noise(kind, scale, n, rng):
    if kind == "gaussian":
        return scale * rng.standard_normal(n)
    if kind == "cauchy":
        return scale * rng.standard_cauchy(n)
    return np.zeros(n)


def _package(grid, Z, y, signal, train, test, gamma, seed, noise_scale=None):
    return Replicate(
        train=(CurveSet(grid, Z[train]), y[train]),
        test=(CurveSet(grid, Z[test]), y[test]),
        true_gamma=gamma, seed=seed, noise_scale=noise_scale,
        signal={"train": signal[train], "test": signal[test]},
    )


def gen_sim1(spec: SimSpec, *, zero_scores: bool = False) -> Replicate:
    """Cosine design: ``y = int gamma Z + eps`` with 50 cosine terms.

    ``zero_scores`` forces all curve scores to zero (test hook) while keeping
    the random stream unchanged.
    """
    if spec.kind != "cosine":
        raise DomainError("gen_sim1 needs a cosine SimSpec")
    rng = np.random.default_rng(spec.seed)
    J = spec.terms
    grid = np.linspace(0.0, 1.0, spec.d)
    phi = cosine_basis(grid, J)
    U = rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=(spec.n, J))
    if zero_scores:
        U = np.zeros_like(U)
    Z = (U * sim1_score_sd(J)) @ phi.T
    gamma = phi @ sim1_coefficients(J)
    signal = integrate(Z, gamma, grid)
    y = signal + _noise(spec.error, spec.error_scale, spec.n, rng)
    train, test = _split(spec.n, spec.split_fraction, rng)
    return _package(grid, Z, y, signal, train, test, gamma, spec.seed)


def sim2_coefficients(pattern: int, J: int = SIM2_TERMS) -> np.ndarray:
    a = np.zeros(J)
    for j in SIM2_PATTERNS[pattern]:
        if j <= J:
            a[j - 1] = (-1.0) ** j
    return a


def sim2_gamma(source: CurveSet, pattern: int, J: int = SIM2_TERMS) -> np.ndarray:
    """``gamma(t) = sum_j a_j phi_j(t)`` over the leading empirical fPCs of ``source``.

    Eigenvectors are rescaled to unit L2 norm on ``[0, 1]`` (trapezoid rule).
    """
    _, vecs = fpc_eigen(source)
    phi = vecs[:, :J]
    norms = np.sqrt(np.trapezoid(phi * phi, source.grid, axis=0))
    return (phi / norms) @ sim2_coefficients(pattern, J)


def gen_sim2(spec: SimSpec) -> Replicate:
    """Curve-driven design on user-supplied (or synthetic) source curves."""
    if spec.kind != "curve_driven":
        raise DomainError("gen_sim2 needs a curve_driven SimSpec")
    if spec.source is None:
        raise MissingSourceError(
            "Simulation II needs source curves: save them as a curve CSV (header = grid, "
            "one curve per row) and pass --source-curves PATH")
    src = spec.source
    if spec.n > src.n:
        raise DomainError(f"requested n={spec.n} exceeds the {src.n} source curves")
    rng = np.random.default_rng(spec.seed)
    gamma = sim2_gamma(src, spec.pattern, spec.terms)
    rows = np.sort(rng.choice(src.n, size=spec.n, replace=False)) if spec.n < src.n else np.arange(src.n)
    Z = src.curves[rows]
    signal = integrate(Z, gamma, src.grid)
    noise_scale = float(np.std(signal, ddof=1)) * spec.noise_multiplier
    if spec.error == "none":
        eps = np.zeros(spec.n)
    else:
        eps = rng.normal(0.0, noise_scale, size=spec.n)
    y = signal + eps
    train, test = _split(spec.n, spec.split_fraction, rng)
    return _package(src.grid, Z, y, signal, train, test, gamma, spec.seed, noise_scale)


def synthetic_source_curves(n: int = 1717, d: int = 64, J: int = 20, seed: int = 0,
                            decay: float = 1.2) -> CurveSet:
    """Rank-``J`` smooth curves standing in for a real source dataset.

    Curves are a fixed mean plus ``J`` orthonormal Fourier-type components
    with variances ``j ** -decay``; centered, they span exactly ``J``
    dimensions.
    """
    grid = np.linspace(0.0, 1.0, d)
    cols = [np.ones(d)]
    k = 1
    while len(cols) < J:
        cols.append(np.cos(2 * np.pi * k * grid))
        if len(cols) < J:
            cols.append(np.sin(2 * np.pi * k * grid))
        k += 1
    Q, _ = np.linalg.qr(np.column_stack(cols))
    rng = np.random.default_rng(seed)
    sd = np.arange(1, J + 1) ** (-decay / 2)
    scores = rng.standard_normal((n, J)) * sd
    mean = 2.0 * np.sin(np.pi * grid)
    return CurveSet(grid, mean + scores @ Q.T * math.sqrt(d))


def generate(spec: SimSpec) -> Replicate:
    return gen_sim1(spec) if spec.kind == "cosine" else gen_sim2(spec)


@dataclass(frozen=True)
class MethodSpec:
    """One study arm: a method with a fixed K, or ``K=None`` for CV choice."""

    method: str
    K: int | None = None
    init: str | None = None

    @property
    def label(self) -> str:
        k = "auto" if self.K is None else str(self.K)
        base = self.method if self.init is None else f"{self.method}-{self.init}"
        return f"{base}:{k}"

    @classmethod
    def parse(cls, text: str) -> "MethodSpec":
        """Parse ``"apqr:2"``, ``"fpc:auto"``, ``"apqr-pls:3"`` or ``"pls"``."""
        name, _, k = text.partition(":")
        method, _, init = name.partition("-")
        if method not in ("apqr", "fpc", "pls"):
            raise DomainError(f"unknown method {method!r}")
        K = None if k in ("", "auto") else int(k)
        return cls(method, K, init or None)


DEFAULT_K_GRID = (1, 2, 3, 4, 5, 6)


def _fit_arm(arm: MethodSpec, rep: Replicate, tau, Ks, folds):
    from .select import select_k

    Ztr, ytr = rep.train
    K = arm.K
    if K is None:
        K = select_k(Ztr, None, ytr, tau, Ks, criterion="cv", method=arm.method,
                     folds=folds, seed=rep.seed, init=arm.init).chosen_K
    model = fit_model(Ztr, None, ytr, tau, K, method=arm.method, seed=rep.seed, init=arm.init)
    Zte, yte = rep.test
    return K, mae(yte, model.predict(None, Zte))


def run_rep(spec: SimSpec, arms, rep_index: int, seed: int, tau=0.5, Ks=DEFAULT_K_GRID,
            folds: int = 10) -> list:
    rep_seed = seed + rep_index
    rep = generate(spec.with_seed(rep_seed))
    rows = []
    for arm in arms:
        row = {"rep": rep_index, "method": arm.label, "K": arm.K, "MAE": math.nan,
               "seed": rep_seed, "status": "ok"}
        try:
            row["K"], row["MAE"] = _fit_arm(arm, rep, tau, Ks, folds)
        except (ApqrError, np.linalg.LinAlgError) as exc:
            row["status"] = f"error: {type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


def run_study(spec: SimSpec, methods, Ks=DEFAULT_K_GRID, reps: int = 1, seed: int = 0,
              tau: float = 0.5, folds: int = 10, n_jobs: int = 1) -> list:
    """MAE table, one row per (replicate, method).

    Replicate ``r`` is generated with seed ``seed + r``; methods given as
    strings are parsed with :meth:`MethodSpec.parse`. Failed fits become
    rows with ``status`` starting ``"error"`` and a NaN MAE.
    """
    if reps < 1:
        raise DomainError("reps must be >= 1")
    arms = [m if isinstance(m, MethodSpec) else MethodSpec.parse(m) for m in methods]
    if n_jobs == 1:
        chunks = [run_rep(spec, arms, r, seed, tau, Ks, folds) for r in range(reps)]
    else:
        from joblib import Parallel, delayed

        chunks = Parallel(n_jobs=n_jobs)(
            delayed(run_rep)(spec, arms, r, seed, tau, Ks, folds) for r in range(reps))
    return [row for chunk in chunks for row in chunk]


def summarize(rows) -> dict:
    """Median and quartiles of MAE per method label (successful rows only)."""
    out = {}
    labels = list(dict.fromkeys(r["method"] for r in rows))
    for label in labels:
        vals = np.array([r["MAE"] for r in rows if r["method"] == label and r["status"] == "ok"])
        failed = sum(1 for r in rows if r["method"] == label and r["status"] != "ok")
        if vals.size:
            q1, med, q3 = np.percentile(vals, [25, 50, 75])
            out[label] = {"n": int(vals.size), "failed": failed, "median": float(med),
                          "q1": float(q1), "q3": float(q3)}
        else:
            out[label] = {"n": 0, "failed": failed, "median": None, "q1": None, "q3": None}
    return out
