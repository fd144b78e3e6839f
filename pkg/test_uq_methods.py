"""MC dropout, ADF and test-time augmentation estimators."""
import math

import numpy as np
import pytest

from uqbench.tools.biomass_sim import generate_dataset
from uqbench.tools.uq_methods import (
    AugmentationSpec,
    apply_sigma_calibration,
    combine_passes,
    fit_sigma_calibration,
    predict,
    predict_adf,
    predict_batch,
    predict_mc_dropout,
    predict_tta,
    train_regressor,
    tta_replicates,
)
from uqbench.tools.utils import tinynet
from uqbench.tools.utils.bench_config import NetSettings
from uqbench.tools.utils.errors import ParameterError

FAST_NET = NetSettings(hidden=[8, 8], epochs=3, batch=64)


def _affine_model(dropout_rate: float = 0.0) -> tinynet.MlpModel:
    w = np.array([[0.5, -1.0], [0.2, 0.3]])
    b = np.array([1.0, -0.5])
    return tinynet.MlpModel([2, 2], [w], [b], dropout_rate=dropout_rate, y_shift=10.0, y_scale=2.0)


def test_combine_passes_decomposition():
    var = np.full((4, 3), 2.5)
    record = combine_passes(np.zeros((4, 3)), var)
    assert np.allclose(record.sigma_a ** 2, 2.5)
    assert np.all(record.sigma_e == 0)
    b = np.array([[1.0], [3.0], [1.0], [3.0]])
    record = combine_passes(b, np.ones((4, 1)))
    assert record.b_hat[0] == pytest.approx(2.0)
    assert record.sigma_e[0] ** 2 == pytest.approx(1.0)
    assert record.sigma_total[0] == pytest.approx(math.sqrt(2.0))


def test_mc_dropout_without_dropout_is_deterministic():
    model = tinynet.init_model([2, 6, 2], dropout_rate=0.0, seed=3)
    x = np.array([[0.2, 0.4], [1.0, -1.0]])
    record = predict_mc_dropout(model, x, t_samples=5, seed=1)
    b, v = tinynet.regression_outputs(model, tinynet.forward(model, x))
    assert np.all(record.sigma_e == 0)
    assert np.allclose(record.b_hat, b)
    assert np.allclose(record.sigma_a ** 2, v)


def test_mc_dropout_spread_with_dropout():
    model = tinynet.init_model([2, 32, 32, 2], dropout_rate=0.3, seed=4)
    record = predict_mc_dropout(model, np.array([[0.5, -0.5]]), t_samples=30, seed=2)
    assert record.sigma_e[0] > 0
    again = predict_mc_dropout(model, np.array([[0.5, -0.5]]), t_samples=30, seed=2)
    assert np.array_equal(record.b_hat, again.b_hat)


def test_adf_zero_input_variance_uses_head_only():
    model = _affine_model()
    x = np.array([[1.0, 2.0]])
    record = predict_adf(model, x, np.zeros_like(x), t_samples=4, seed=0)
    out = tinynet.forward(model, x)[0]
    assert np.all(record.sigma_e == 0)
    assert record.b_hat[0] == pytest.approx(10.0 + 2.0 * out[0])
    assert record.sigma_a[0] ** 2 == pytest.approx(math.exp(out[1]) * 4.0)


def test_adf_affine_matches_linear_gaussian_propagation():
    model = _affine_model()
    x = np.array([[1.0, 2.0]])
    x_var = np.array([[0.3, 0.1]])
    record = predict_adf(model, x, x_var, t_samples=3, seed=0)
    w = model.weights[0]
    mu = x[0] @ w.T + model.biases[0]
    v = x_var[0] @ (w * w).T
    expected = (v[0] + math.exp(mu[1] + 0.5 * v[1])) * 4.0
    assert record.sigma_a[0] ** 2 == pytest.approx(expected)


def test_tta_zero_augmentation_has_no_spread():
    model = tinynet.init_model([2, 6, 2], dropout_rate=0.0, seed=1)
    record = predict_tta(model, np.array([[0.3, 0.7]]), AugmentationSpec(), t_samples=8, seed=1)
    assert record.sigma_a[0] == pytest.approx(0.0, abs=1e-12)
    assert np.all(record.sigma_e == 0)


def test_tta_linear_model_variance_scaling():
    stack = tta_replicates(lambda x: 2.0 * x, np.zeros(1),
                           lambda x, rng: x + rng.standard_normal(x.shape), 20_000, seed=3)
    assert stack.shape == (20_000, 1)
    assert stack.var() == pytest.approx(4.0, rel=0.05)


@pytest.mark.parametrize("t_samples", [0, 1])
def test_too_few_passes_rejected(t_samples):
    model = tinynet.init_model([2, 4, 2], seed=0)
    with pytest.raises(ParameterError):
        predict_mc_dropout(model, np.ones((1, 2)), t_samples=t_samples)


def test_unknown_method_rejected():
    ds = generate_dataset(0.1, n_per_axis=15, seed=1)
    with pytest.raises(ParameterError):
        train_regressor(ds, FAST_NET, "ensemble", 1)
    with pytest.raises(ParameterError):
        predict(tinynet.init_model([2, 4, 2]), "ensemble", np.ones((1, 2)), 0.1)


def test_sigma_calibration_recovers_scale():
    pred = np.array([1.0, 2.0, 4.0])
    calibration = fit_sigma_calibration(pred, 3.0 * pred)
    assert calibration["scale"] == pytest.approx(3.0)
    assert np.allclose(apply_sigma_calibration(pred, calibration), 3.0 * pred)
    assert fit_sigma_calibration(np.zeros(3), pred)["scale"] == 1.0


@pytest.mark.parametrize("method", ["mc_dropout", "adf"])
def test_train_and_predict_batch(method):
    ds = generate_dataset(0.1, n_per_axis=30, seed=5)
    model = train_regressor(ds, FAST_NET, method, 5)
    assert model.training["method"] == method
    preds = predict_batch(model, method, ds.test(), t_samples=5, seed=6)
    assert list(preds.columns) == ["d", "h", "b_true", "b_hat", "sigma_a", "sigma_e"]
    assert len(preds) == len(ds.test())
    assert (preds["sigma_a"] >= 0).all() and (preds["sigma_e"] >= 0).all()
    again = predict_batch(train_regressor(ds, FAST_NET, method, 5), method, ds.test(), t_samples=5, seed=6)
    assert preds.equals(again)
