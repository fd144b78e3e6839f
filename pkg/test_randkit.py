"""Seeded streams and distribution samplers."""
import numpy as np
import pytest

from uqbench.tools.biomass_sim import D_GAMMA, H_GAMMA
from uqbench.tools.utils.errors import ParameterError
from uqbench.tools.utils.randkit import (
    GammaParams,
    SeedBundle,
    as_generator,
    sample_gamma,
    sample_gaussian,
    sample_poisson,
)


def test_same_name_same_sequence():
    bundle = SeedBundle(12345)
    assert np.array_equal(bundle.rng("sampling").random(100), bundle.rng("sampling").random(100))


def test_different_names_and_roots_differ():
    bundle = SeedBundle(42)
    assert len({bundle.derive("sampling"), bundle.derive("init"), bundle.derive("noise")}) == 3
    assert SeedBundle(42).derive("x") != SeedBundle(43).derive("x")


def test_child_path_changes_stream():
    bundle = SeedBundle(42)
    assert bundle.child("a").derive("x") != bundle.child("b").derive("x")
    assert bundle.child("a").derive("x") == SeedBundle(42, ("a",)).derive("x")


def test_stream_independent_of_call_order():
    first = SeedBundle(7)
    _ = first.rng("other").random(10)
    a = first.rng("target").random(5)
    b = SeedBundle(7).rng("target").random(5)
    assert np.array_equal(a, b)


def test_as_generator_passes_generators_through():
    rng = np.random.default_rng(0)
    assert as_generator(rng) is rng
    with pytest.raises(ParameterError):
        as_generator("seven")


def test_bad_seed_rejected():
    with pytest.raises(ParameterError):
        SeedBundle(-1)


def test_gamma_means_match_analytic_values():
    assert D_GAMMA.mean == pytest.approx(25.5224, abs=1e-3)
    assert H_GAMMA.mean == pytest.approx(16.06, abs=1e-2)
    d = sample_gamma(D_GAMMA, 200_000, 1)
    h = sample_gamma(H_GAMMA, 200_000, 2)
    assert d.mean() == pytest.approx(25.52, rel=0.01)
    assert h.mean() == pytest.approx(16.06, rel=0.01)
    assert d.min() >= D_GAMMA.location


def test_gamma_location_is_a_pure_shift():
    base = sample_gamma(GammaParams(0.68, 0.0, 30.18), 1000, SeedBundle(5))
    shifted = sample_gamma(GammaParams(0.68, 5.0, 30.18), 1000, SeedBundle(5))
    assert np.allclose(shifted, base + 5.0, rtol=0, atol=1e-12)


def test_gamma_unit_shape_is_exponential():
    x = sample_gamma(GammaParams(1.0, 0.0, 1.0), 200_000, 3)
    assert x.mean() == pytest.approx(1.0, rel=0.01)
    assert x.var() == pytest.approx(1.0, rel=0.03)


@pytest.mark.parametrize("params", [GammaParams(0.0, 0.0, 1.0), GammaParams(1.0, 0.0, -2.0)])
def test_gamma_invalid_params(params):
    with pytest.raises(ParameterError):
        sample_gamma(params, 10, 0)


def test_gaussian_edge_cases():
    assert np.array_equal(sample_gaussian(0.0, 0.0, 5, 0), np.zeros(5))
    assert sample_gaussian(0.0, 1.0, 200_000, 4).var() == pytest.approx(1.0, rel=0.02)
    x = sample_gaussian(10.0, 2.0, 200_000, 5)
    inside = np.mean((x >= 6.08) & (x <= 13.92))
    assert inside == pytest.approx(0.95, abs=0.005)
    with pytest.raises(ParameterError):
        sample_gaussian(0.0, -1.0, 5, 0)


def test_poisson_moments():
    assert np.array_equal(sample_poisson(0.0, 10, 0), np.zeros(10, dtype=np.int64))
    x = sample_poisson(4.0, 200_000, 6)
    assert x.mean() == pytest.approx(4.0, rel=0.01)
    assert x.var() == pytest.approx(4.0, rel=0.02)
    assert sample_poisson(255.0, 50_000, 7).mean() == pytest.approx(255.0, rel=0.005)
    with pytest.raises(ParameterError):
        sample_poisson(-1.0, 3, 0)


def test_zero_count_rejected():
    with pytest.raises(ParameterError):
        sample_gaussian(0.0, 1.0, 0, 0)
