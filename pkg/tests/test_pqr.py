import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import apqr._descent as descent
import apqr.pqr as pqr
from apqr.basis import BasisMatrix, CurveSet, canonicalize, fpc_basis, project, standardize
from apqr.errors import CapacityError, ConvergenceError, MonotonicityError, ShapeError
from apqr.loss import HuberParams, huber_loss
from apqr.model import FittedQuantileModel, predict
from apqr.oracle import exact_qr_fit, smoothed_qr_fit
from apqr.pqr import (
    PqrState,
    ab_gradient,
    eta_gradient,
    fit_apqr,
    information,
    initial_basis,
    objective_l,
    objective_lN,
    relax,
    residuals,
    score,
)
from apqr.schedule import default_schedule


def make_state(rng, d, K, p=0, nu=0.7):
    grid = np.linspace(0, 1, d)
    return PqrState(alpha=float(rng.standard_normal()), beta=rng.standard_normal(p),
                    C=BasisMatrix(rng.standard_normal((d, K)), "APQR", grid),
                    objective=0.0, stage=0, pass_index=0, nu=nu)


def planted(seed, n, d=20, noise=0.0, n_test=0):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(d)
    c /= np.linalg.norm(c)
    Z = rng.standard_normal((n + n_test, d))
    y = Z @ c + noise * rng.standard_normal(n + n_test)
    grid = np.linspace(0, 1, d)
    return (CurveSet(grid, Z[:n]), y[:n]), (CurveSet(grid, Z[n:]), y[n:]), c


# objectives

def test_objective_lN_examples():
    C = np.zeros((2, 1))
    Z = np.zeros((1, 2))
    assert objective_lN(0.0, [], C, Z, None, [0.0], 0.5, 1.0) == 0.0
    assert objective_lN(0.0, [], C, Z, None, [2.0], 0.5, 1.0) == pytest.approx(-0.875, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 0.95), st.floats(1e-3, 5.0))
def test_smoothed_objective_dominates_check_objective(seed, tau, nu):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((15, 4))
    y = rng.standard_normal(15)
    C = rng.standard_normal((4, 2))
    a = float(rng.standard_normal())
    lN = objective_lN(a, [], C, Z, None, y, tau, nu)
    l = objective_l(a, [], C, Z, None, y, tau)
    assert l <= lN <= 0.0


def test_objective_lN_rejects_bad_shapes():
    with pytest.raises(ShapeError):
        objective_lN(0.0, [], np.zeros((3, 1)), np.zeros((4, 2)), None, np.zeros(4), 0.5, 1.0)


def test_objective_depends_on_C_only_through_row_sums(rng):
    Z = rng.standard_normal((10, 5))
    y = rng.standard_normal(10)
    C = rng.standard_normal((5, 3))
    C2 = C.copy()
    C2[:, 0] += 1.0
    C2[:, 1] -= 1.0
    a = objective_lN(0.1, [], C, Z, None, y, 0.3, 0.5)
    b = objective_lN(0.1, [], C2, Z, None, y, 0.3, 0.5)
    assert a == pytest.approx(b, rel=1e-13)


# gradients

def test_eta_gradient_examples(rng):
    g = eta_gradient(np.eye(4)[2], 2)
    expected = np.zeros(8)
    expected[[2, 6]] = -1.0
    np.testing.assert_array_equal(g, expected)
    z = rng.standard_normal(5)
    np.testing.assert_array_equal(eta_gradient(z, 1), -z)


@pytest.mark.parametrize("seed", range(10))
def test_eta_gradient_finite_difference(seed):
    rng = np.random.default_rng(seed)
    d, K = 6, 3
    Z = rng.standard_normal((1, d))
    y = rng.standard_normal(1)
    C = rng.standard_normal((d, K))
    h = 1e-6
    fd = np.empty(d * K)
    for j in range(d * K):
        E = np.zeros(d * K)
        E[j] = h
        dC = E.reshape((d, K), order="F")
        fd[j] = (residuals(0.0, [], C + dC, Z, None, y)[0] - residuals(0.0, [], C - dC, Z, None, y)[0]) / (2 * h)
    np.testing.assert_allclose(eta_gradient(Z[0], K), fd, rtol=1e-8, atol=1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_score_finite_difference(seed):
    rng = np.random.default_rng(seed)
    n, d, K, tau, nu = 20, 5, 2, 0.35, 0.8
    Z = rng.standard_normal((n, d))
    y = rng.standard_normal(n)
    st_ = make_state(rng, d, K, nu=nu)
    s = score(st_, Z, None, y, tau)
    h = 1e-6
    fd = np.empty(d * K)
    for j in range(d * K):
        E = np.zeros(d * K)
        E[j] = h
        dC = E.reshape((d, K), order="F")
        up = objective_lN(st_.alpha, st_.beta, st_.C.vectors + dC, Z, None, y, tau, nu)
        dn = objective_lN(st_.alpha, st_.beta, st_.C.vectors - dC, Z, None, y, tau, nu)
        fd[j] = (up - dn) / (2 * h)
    np.testing.assert_allclose(s, fd, rtol=1e-6, atol=1e-8)


def test_score_on_quadratic_branch(rng):
    n, d, K, nu = 8, 3, 2, 1e3
    Z = rng.standard_normal((n, d))
    y = rng.standard_normal(n)
    st_ = make_state(rng, d, K, nu=nu)
    r = residuals(st_.alpha, st_.beta, st_.C, Z, None, y)
    assert np.all(np.abs(r) < 0.5 * nu)
    expected = sum(r[i] * np.kron(np.ones(K), Z[i]) for i in range(n)) / nu
    np.testing.assert_allclose(score(st_, Z, None, y, 0.5), expected, rtol=1e-12)


def test_score_equals_minus_weighted_eta_gradients(rng):
    n, d, K, tau, nu = 12, 4, 3, 0.6, 0.4
    Z = rng.standard_normal((n, d))
    y = rng.standard_normal(n)
    st_ = make_state(rng, d, K, nu=nu)
    r = residuals(st_.alpha, st_.beta, st_.C, Z, None, y)
    from apqr.loss import huber_derivative

    h = huber_derivative(r, HuberParams(tau, nu))
    total = -sum(h[i] * eta_gradient(Z[i], K) for i in range(n))
    np.testing.assert_allclose(score(st_, Z, None, y, tau), total, rtol=1e-12, atol=1e-14)


def test_information_modes(rng):
    n, d, K = 15, 4, 2
    Z = rng.standard_normal((n, d))
    y = rng.standard_normal(n)
    st_ = make_state(rng, d, K, nu=0.5)
    s = score(st_, Z, None, y, 0.3)
    lit = information(st_, Z, None, y, 0.3, mode="literal")
    np.testing.assert_array_equal(lit, np.outer(s, s))
    per = information(st_, Z, None, y, 0.3)
    for M in (lit, per):
        np.testing.assert_array_equal(M, M.T)
        assert np.linalg.eigvalsh(M).min() >= -1e-10 * max(1.0, np.abs(M).max())
    one = information(st_, Z[:1], None, y[:1], 0.3)
    np.testing.assert_allclose(one, information(st_, Z[:1], None, y[:1], 0.3, mode="literal"),
                               rtol=1e-14, atol=1e-15)
    with pytest.raises(ValueError):
        information(st_, Z, None, y, 0.3, mode="observed")


# block relaxation

def test_planted_noiseless_recovery():
    (Z, y), (Zt, yt), c = planted(11, 200, d=20, n_test=100)
    trace, model = fit_apqr(Z, None, y, 0.5, 1, seed=11)
    cbar = trace.states[-1].C.vectors.sum(axis=1)
    # curves were standardized; map the estimate back to raw coordinates
    raw = cbar / model.scale
    assert abs(np.corrcoef(raw, c)[0, 1]) > 0.999
    assert np.mean(np.abs(predict(model, None, Zt) - yt)) < 1e-2


def test_single_column_reduces_to_smoothed_fit(rng):
    z = rng.standard_normal(40)
    y = 0.7 - 1.3 * z + 0.3 * rng.standard_t(4, 40)
    sched = default_schedule(y)
    state, trace = relax(z[:, None], None, y, 0.5, np.array([[0.2]]), sched)
    ref = smoothed_qr_fit(np.column_stack([np.ones(40), z]), y, 0.5, schedule=sched)
    assert state.alpha == pytest.approx(ref[0], abs=1e-6)
    assert state.C.vectors.sum() == pytest.approx(ref[1], abs=1e-6)


def test_trace_is_monotone_and_state_consistent(rng):
    Z = CurveSet(np.linspace(0, 1, 8), rng.standard_normal((60, 8)))
    X = rng.standard_normal((60, 2))
    y = X @ [1.0, -0.5] + Z.curves[:, 2] + rng.standard_normal(60)
    trace, model = fit_apqr(Z, X, y, 0.3, 2, seed=1)
    assert trace.is_monotone(1e-9)
    blocks = {e["block"] for e in trace.entries}
    assert {"init", "C", "ab"} <= blocks
    Zs = standardize(Z)
    for st_ in trace.states:
        recomputed = objective_lN(st_.alpha, st_.beta, st_.C, Zs, X, y, 0.3, st_.nu)
        assert st_.objective == pytest.approx(recomputed, abs=1e-9)
    nus = [st_.nu for st_ in trace.states]
    assert all(b < a for a, b in zip(nus, nus[1:]))


def test_stationarity_at_saved_state(rng):
    Z = CurveSet(np.linspace(0, 1, 10), rng.standard_normal((80, 10)))
    X = rng.standard_normal((80, 1))
    y = 2 * X[:, 0] + Z.curves[:, :3].sum(axis=1) + rng.standard_normal(80)
    sched = default_schedule(y)
    trace, _ = fit_apqr(Z, X, y, 0.5, 2, schedule=sched, seed=2)
    st_ = trace.states[-1]
    Zs = standardize(Z)
    A = np.column_stack([np.ones(80), X, Zs.curves])
    coef = np.concatenate([[st_.alpha], st_.beta, st_.C.vectors.sum(axis=1)])
    obj = -st_.objective
    thresh = descent.stationarity_threshold(A, y, coef, 0.5, st_.nu, sched.inner_tol, obj,
                                            magnitude=np.abs(y))
    assert np.abs(score(st_, Zs, X, y, 0.5)).max() <= 10 * thresh
    assert np.abs(ab_gradient(st_, Zs, X, y, 0.5)).max() <= 10 * thresh


def test_c_block_maximizer_has_small_score(rng):
    n, d = 50, 6
    Z = rng.standard_normal((n, d))
    y = Z[:, 0] + 0.5 * rng.standard_normal(n)
    nu, tau, tol = 0.3, 0.5, 1e-10
    res = descent.minimize(Z, y - 0.2, tau, nu, np.zeros(d), tol=tol)
    C = np.column_stack([res.coef / 2, res.coef / 2])
    st_ = PqrState(0.2, np.zeros(0), BasisMatrix(C, "APQR", np.linspace(0, 1, d)), 0.0, 0, 0, nu)
    assert np.abs(score(st_, Z, None, y, tau)).max() <= tol * (1 + res.objective) + 1e-12


@pytest.mark.parametrize("seed", range(20))
def test_fit_within_gap_of_augmented_oracle(seed):
    rng = np.random.default_rng(500 + seed)
    n, d = int(rng.integers(8, 26)), int(rng.integers(2, 5))
    tau = float(rng.uniform(0.2, 0.8))
    Z = CurveSet(np.linspace(0, 1, d), rng.standard_normal((n, d)))
    y = Z.curves @ rng.standard_normal(d) + rng.standard_normal(n)
    trace, _ = fit_apqr(Z, None, y, tau, 1, seed=seed)
    st_ = trace.states[-1]
    Zs = standardize(Z)
    D = np.column_stack([np.ones(n), Zs.curves])
    best = float(np.sum((lambda r: r * (tau - (r < 0)))(y - D @ exact_qr_fit(D, y, tau))))
    got = -objective_l(st_.alpha, st_.beta, st_.C, Zs, None, y, tau)
    assert got <= best + n * HuberParams(tau, st_.nu).gap_bound() + 1e-6


def test_permuted_initial_basis_gives_identical_fit(rng):
    Z = CurveSet(np.linspace(0, 1, 7), rng.standard_normal((50, 7)))
    y = Z.curves[:, 1] - Z.curves[:, 4] + rng.standard_normal(50)
    C0 = rng.standard_normal((7, 3))
    _, m1 = fit_apqr(Z, None, y, 0.5, 3, init=C0)
    _, m2 = fit_apqr(Z, None, y, 0.5, 3, init=C0[:, [2, 0, 1]])
    np.testing.assert_allclose(m2.basis.vectors, m1.basis.vectors, atol=1e-8)
    np.testing.assert_allclose(predict(m2, None, Z), predict(m1, None, Z), atol=1e-8)


def test_initializations(rng):
    Z = standardize(CurveSet(np.linspace(0, 1, 6), rng.standard_normal((30, 6))))
    y = Z.curves[:, 0] + rng.standard_normal(30)
    for init in (None, "random", 4, "fpc", "pls", BasisMatrix(np.eye(6)[:, :2], "random", Z.grid)):
        C0 = initial_basis(init, Z, None, y, 2, seed=0)
        assert C0.shape == (6, 2)
        assert np.all(np.diff(C0[0]) <= 0)
    np.testing.assert_array_equal(initial_basis(None, Z, None, y, 2, seed=9),
                                  initial_basis(9, Z, None, y, 2))
    with pytest.raises(ValueError):
        initial_basis("pqr", Z, None, y, 2)
    with pytest.raises(ShapeError):
        initial_basis(np.ones((5, 2)), Z, None, y, 2)
    _, m = fit_apqr(Z, None, y, 0.5, 2, init="fpc")
    assert m.basis.kind == "APQR"


def test_capacity_checked():
    Z = CurveSet(np.linspace(0, 1, 4), np.random.default_rng(0).standard_normal((6, 4)))
    with pytest.raises(CapacityError):
        fit_apqr(Z, None, np.arange(6.0), 0.5, 5)


def test_pass_cap_raises_with_trace(rng):
    Z = CurveSet(np.linspace(0, 1, 6), rng.standard_normal((40, 6)))
    y = Z.curves[:, 0] + rng.standard_normal(40)
    sched = default_schedule(y, max_passes=1)
    with pytest.raises(ConvergenceError) as err:
        fit_apqr(Z, None, y, 0.5, 2, schedule=sched)
    assert err.value.trace is not None and len(err.value.trace) > 0


def test_decreasing_block_update_is_flagged(rng, monkeypatch):
    Z = CurveSet(np.linspace(0, 1, 5), rng.standard_normal((30, 5)))
    y = Z.curves[:, 0] + rng.standard_normal(30)
    real = descent.minimize

    def sabotaged(D, target, *args, **kwargs):
        res = real(D, target, *args, **kwargs)
        if D.shape[1] == 5:
            return descent.DescentResult(res.coef + 1.0, res.objective, res.grad_norm, res.iterations)
        return res

    monkeypatch.setattr(descent, "minimize", sabotaged)
    with pytest.raises(MonotonicityError):
        pqr.relax(standardize(Z), None, y, 0.5, np.ones((5, 1)), default_schedule(y))


def test_canonicalization_keeps_predictions_bitwise(rng):
    Z = CurveSet(np.linspace(0, 1, 6), rng.standard_normal((20, 6)))
    X = rng.standard_normal((20, 1))
    Zs = standardize(Z)
    C = BasisMatrix(rng.standard_normal((6, 3)), "APQR", Z.grid)
    gamma = rng.standard_normal(3)
    m = FittedQuantileModel(0.5, 0.3, [1.5], C, gamma, Zs.center, Zs.scale, "apqr")
    order = np.argsort(-C.vectors[0])
    mc = FittedQuantileModel(0.5, 0.3, [1.5], canonicalize(C), gamma[order], Zs.center, Zs.scale, "apqr")
    np.testing.assert_array_equal(predict(m, X, Z), predict(mc, X, Z))


def test_predict_contracts(rng):
    Z = CurveSet(np.linspace(0, 1, 6), rng.standard_normal((25, 6)))
    X = rng.standard_normal((25, 2))
    y = X[:, 0] + Z.curves[:, 1] + rng.standard_normal(25)
    _, m = fit_apqr(Z, X, y, 0.5, 2)
    np.testing.assert_array_equal(predict(m, X, Z), m.fitted)
    flat = FittedQuantileModel(0.5, 1.25, [0.0, 0.0], m.basis, [0.0, 0.0], m.center, m.scale, "apqr")
    np.testing.assert_array_equal(predict(flat, X, Z), np.full(25, 1.25))
    with pytest.raises(ShapeError):
        predict(m, None, Z)
    with pytest.raises(ShapeError):
        predict(m, X, CurveSet(np.linspace(0, 1, 6) ** 2, Z.curves))
