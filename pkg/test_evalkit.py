"""Scoring metrics and per-point uncertainty correlation."""
import json

import numpy as np
import pytest

from uqbench.tools import evalkit
from uqbench.tools.utils.errors import ShapeError, UndefinedMetricError

REF = np.array([1.0, 2.0, 3.0, 6.0])


def test_r_squared():
    assert evalkit.r_squared(REF, REF) == 1.0
    assert evalkit.r_squared(np.full(4, REF.mean()), REF) == pytest.approx(0.0)
    with pytest.raises(UndefinedMetricError):
        evalkit.r_squared(REF, np.ones(4))


def test_r_squared_unchanged_by_common_affine_map():
    pred = np.array([1.2, 1.9, 3.4, 5.5])
    base = evalkit.r_squared(pred, REF)
    for scale, shift in ((2.0, 0.0), (0.5, 10.0), (-3.0, 1.0)):
        assert evalkit.r_squared(scale * pred + shift, scale * REF + shift) == pytest.approx(base, abs=1e-12)


def test_rmse_is_symmetric():
    pred = np.array([0.5, 2.5, 2.0, 7.0])
    assert evalkit.rmse(pred, REF) == evalkit.rmse(REF, pred)
    assert evalkit.rmse(REF, REF) == 0.0


def test_pct_rmse():
    assert evalkit.pct_rmse(REF, REF) == 0.0
    assert evalkit.pct_rmse(REF + 0.5, REF) == pytest.approx(100 * 0.5 / 3.0)
    rms = np.sqrt(np.mean(REF ** 2))
    assert evalkit.pct_rmse(2 * REF, REF) == pytest.approx(100 * rms / 3.0)
    with pytest.raises(UndefinedMetricError):
        evalkit.pct_rmse(REF, np.zeros(4))


def test_bias_and_pearson():
    assert evalkit.relative_bias(REF * 1.1, REF) == pytest.approx(0.1)
    assert evalkit.pearson(REF, 3 * REF + 1) == pytest.approx(1.0)
    with pytest.raises(UndefinedMetricError):
        evalkit.pearson(REF, np.ones(4))


def test_length_mismatch():
    with pytest.raises(ShapeError):
        evalkit.rmse(REF, REF[:3])


def test_evaluate_report_serializes():
    report = evalkit.evaluate(REF * 1.05, REF, correlations=np.linspace(0.8, 1.0, 20))
    payload = json.loads(report.to_json())
    assert set(payload) == {"r2", "rmse", "pct_rmse", "bias", "corr_quantiles"}
    assert len(payload["corr_quantiles"]) == len(evalkit.DEFAULT_QUANTILES)


def test_uncertainty_correlation_signs():
    ref = np.array([[1.0, 2.0, 5.0], [2.0, 4.0, 6.0], [3.0, 7.0, 9.0]])
    same = evalkit.uncertainty_correlation(0.5 * ref, ref)
    assert np.allclose(same.coefficients, 1.0)
    assert same.share_above(0.9) == 1.0
    flipped = evalkit.uncertainty_correlation(-ref, ref)
    assert np.allclose(flipped.coefficients, -1.0)


def test_constant_points_are_skipped():
    ref = np.array([[1.0, 2.0], [2.0, 2.0], [3.0, 2.0]])
    result = evalkit.uncertainty_correlation(ref, ref)
    assert result.skipped.tolist() == [1]
    assert result.coefficients.size == 1


def test_uncertainty_correlation_validation():
    with pytest.raises(ShapeError):
        evalkit.uncertainty_correlation(np.ones((3, 2)), np.ones((3, 3)))
    with pytest.raises(UndefinedMetricError):
        evalkit.uncertainty_correlation(np.ones((1, 2)), np.ones((1, 2)))


def test_correlation_quantiles_are_monotone():
    coeffs = np.random.default_rng(6).uniform(-1.0, 1.0, size=300)
    table = evalkit.correlation_quantiles(coeffs, [0.9, 0.1, 0.5, 0.25, 0.75])
    qs = [q for q, _ in table]
    values = [v for _, v in table]
    assert qs == sorted(qs)
    assert all(a <= b for a, b in zip(values, values[1:]))


def test_histogram_table():
    table = evalkit.histogram_table([0.1, 0.2, 0.95, 1.0], bins=2, value_range=(0.0, 1.0))
    assert list(table.columns) == ["bin_left", "bin_right", "count"]
    assert table["count"].tolist() == [2, 2]
