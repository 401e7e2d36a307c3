import numpy as np
import pytest

from apqr.basis import CurveSet
from apqr.errors import ShapeError
from apqr.model import (
    FittedQuantileModel,
    fit_model,
    linear_predictor,
    mae,
    mean_check_loss,
    predict,
    refit_least_squares,
    refit_quantile,
)
from apqr.oracle import exact_qr_fit


@pytest.fixture
def data(rng):
    Z = CurveSet(np.linspace(0, 1, 9), rng.standard_normal((70, 9)))
    X = rng.standard_normal((70, 2))
    y = X @ [0.5, -1.0] + Z.curves[:, 4] + rng.standard_normal(70)
    return Z, X, y


@pytest.mark.parametrize("method,kind", [("apqr", "APQR"), ("fpc", "fPC"), ("pls", "PLS")])
def test_fit_and_predict_each_method(data, method, kind):
    Z, X, y = data
    m = fit_model(Z, X, y, 0.5, 3, method=method, seed=1)
    assert m.basis.kind == kind and m.K == 3 and m.p == 2 and m.method == method
    np.testing.assert_array_equal(predict(m, X, Z), m.fitted)
    assert mae(y, m.fitted) < np.mean(np.abs(y - np.median(y)))


def test_fit_model_validation(data):
    Z, X, y = data
    with pytest.raises(ValueError):
        fit_model(Z, X, y, 0.5, 2, method="lasso")
    with pytest.raises(ShapeError):
        fit_model(Z, X, y[:-1], 0.5, 2, method="fpc")


def test_quantile_refit_close_to_exact():
    rng = np.random.default_rng(1)
    S = rng.standard_normal((25, 2))
    y = S @ [1.0, 2.0] + rng.standard_normal(25)
    a, b, g = refit_quantile(S, None, y, 0.5)
    exact = exact_qr_fit(np.column_stack([np.ones(25), S]), y, 0.5)
    np.testing.assert_allclose(np.concatenate([[a], g]), exact, atol=1e-4)
    assert b.size == 0


def test_least_squares_refit():
    rng = np.random.default_rng(2)
    S = rng.standard_normal((30, 2))
    X = rng.standard_normal(30)
    y = 1.0 + 2.0 * X + S @ [3.0, -1.0]
    a, b, g = refit_least_squares(S, X, y)
    assert a == pytest.approx(1.0) and b[0] == pytest.approx(2.0)
    np.testing.assert_allclose(g, [3.0, -1.0])


def test_model_shape_checks(data):
    Z, X, y = data
    m = fit_model(Z, X, y, 0.5, 2, method="fpc")
    with pytest.raises(ShapeError):
        FittedQuantileModel(0.5, 0.0, [], m.basis, [1.0], m.center, m.scale, "fpc")
    with pytest.raises(ShapeError):
        FittedQuantileModel(0.5, 0.0, [], m.basis, [1.0, 1.0], m.center[:3], m.scale, "fpc")
    with pytest.raises(ShapeError):
        linear_predictor(m, X[:, :1], np.zeros((70, 2)))
    m0 = fit_model(Z, None, y, 0.5, 2, method="fpc")
    with pytest.raises(ShapeError):
        predict(m0, X, Z)


def test_metrics():
    assert mae([1.0, 2.0], [0.0, 4.0]) == 1.5
    assert mean_check_loss([1.0, -1.0], [0.0, 0.0], 0.25) == pytest.approx((0.25 + 0.75) / 2)
