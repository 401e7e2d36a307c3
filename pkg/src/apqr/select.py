"""Choosing the number of basis vectors by cross-validation or BIC."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .basis import CurveSet
from .errors import CapacityError, DomainError
from .loss import _tau, check_loss
from .model import fit_model, predict


TIE_RTOL = 1e-9


@dataclass
class SelectionReport:
    candidate_Ks: list
    criterion: str
    scores: list
    chosen_K: int
    folds: int | None = None
    method: str = "apqr"
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"criterion": self.criterion, "method": self.method, "folds": self.folds,
                "candidate_Ks": list(self.candidate_Ks), "scores": list(self.scores),
                "chosen_K": self.chosen_K, "flags": list(self.flags)}


def fold_assignment(n: int, folds: int, seed) -> np.ndarray:
    """Fold label per row: a seeded shuffle cut into nearly equal blocks."""
    if not 2 <= folds <= n:
        raise DomainError(f"folds must lie in [2, n={n}], got {folds}")
    perm = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=int)
    for f, block in enumerate(np.array_split(perm, folds)):
        labels[block] = f
    return labels


def _rows(X, idx):
    return None if X is None else np.asarray(X, dtype=float).reshape(len(X), -1)[idx]


def cv_score(Z: CurveSet, X, y, tau, K: int, folds: int = 10, method: str = "apqr",
             seed: int = 0, assignment=None, schedule=None, init=None) -> float:
    """Mean held-out check loss over a K-fold partition of the rows.

    Each fold refits the whole pipeline (standardize, basis, refit) on the
    remaining rows. ``folds = n`` is leave-one-out.
    """
    tau = _tau(tau)
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    labels = fold_assignment(n, folds, seed) if assignment is None else np.asarray(assignment)
    losses = np.empty(n)
    for f in np.unique(labels):
        test = labels == f
        train = ~test
        n_train = int(train.sum())
        if K > min(n_train - 1, Z.d):
            raise CapacityError(f"fold {int(f)} leaves {n_train} training rows, too few for K={K}")
        model = fit_model(Z.subset(train), _rows(X, train), y[train], tau, K,
                          method=method, seed=seed, schedule=schedule, init=init)
        pred = predict(model, _rows(X, test), Z.subset(test))
        losses[test] = check_loss(y[test] - pred, tau)
    return math.fsum(losses) / n


def bic_formula(mean_loss: float, K: int, n: int) -> float:
    if mean_loss <= 0:
        return -math.inf
    return math.log(mean_loss) + (K + 1) * math.log(n) / n


def bic_score(Z: CurveSet, X, y, tau, K: int, method: str = "apqr", seed: int = 0,
              schedule=None, init=None) -> float:
    """``log(mean in-sample check loss) + (K + 1) log(n) / n``; ``-inf`` for a perfect fit."""
    tau = _tau(tau)
    y = np.asarray(y, dtype=float).ravel()
    model = fit_model(Z, X, y, tau, K, method=method, seed=seed, schedule=schedule, init=init)
    mean_loss = math.fsum(check_loss(y - model.fitted, tau)) / y.size
    return bic_formula(mean_loss, K, y.size)


def select_k(Z: CurveSet, X, y, tau, Ks, criterion: str = "cv", method: str = "apqr",
             folds: int = 10, seed: int = 0, schedule=None, init=None) -> SelectionReport:
    Ks = sorted({int(k) for k in Ks})
    if not Ks:
        raise DomainError("need at least one candidate K")
    scores, flags = [], []
    for K in Ks:
        if criterion == "cv":
            s = cv_score(Z, X, y, tau, K, folds=folds, method=method, seed=seed,
                         schedule=schedule, init=init)
        elif criterion == "bic":
            s = bic_score(Z, X, y, tau, K, method=method, seed=seed, schedule=schedule, init=init)
            if s == -math.inf:
                flags.append(f"K={K}: zero in-sample loss")
        else:
            raise DomainError(f"unknown criterion {criterion!r}")
        scores.append(s)
    # scores equal up to rounding count as ties; the smallest K wins
    low = min(scores)
    tie = TIE_RTOL * (1.0 + abs(low)) if math.isfinite(low) else 0.0
    best = next(i for i, s in enumerate(scores) if s <= low + tie)
    return SelectionReport(candidate_Ks=Ks, criterion=criterion, scores=scores,
                           chosen_K=Ks[best], folds=folds if criterion == "cv" else None,
                           method=method, flags=flags)
