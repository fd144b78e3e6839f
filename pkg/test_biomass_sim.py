"""Regression benchmark generator: allometric model, splits, persistence."""
import numpy as np
import pytest

from uqbench.tools.biomass_sim import (
    B_MAX,
    D_GAMMA,
    D_RANGE,
    H_GAMMA,
    H_RANGE,
    TEST,
    TRAIN,
    CheckerboardGrid,
    RegressionDataset,
    TreeSample,
    biomass,
    checkerboard_assign,
    generate_dataset,
    load_dataset,
    sample_in_range,
    save_dataset,
    training_size_study,
)
from uqbench.tools.utils.errors import DomainError, MissingArtifactError, ParameterError
from uqbench.tools.utils.randkit import SeedBundle, sample_gamma, sample_gaussian


def test_biomass_reference_values():
    assert biomass(0, 20, 0.65) == 0.0
    assert biomass(30, 20, 0.65) == pytest.approx(628.9, abs=0.1)
    out = biomass(np.array([30.0, 0.0]), np.array([20.0, 20.0]))
    assert out.shape == (2,)


@pytest.mark.parametrize("d, h, rho", [(-1, 20, 0.65), (30, -2, 0.65), (30, 20, 0.0)])
def test_biomass_domain(d, h, rho):
    with pytest.raises(DomainError):
        biomass(d, h, rho)


def test_checkerboard_cells():
    grid = CheckerboardGrid()
    assert grid.cell_width == pytest.approx((29.0, 23.76))
    assert checkerboard_assign(grid, 10, 5) == TRAIN
    assert checkerboard_assign(grid, 40, 5) == TEST
    i, j = grid.cell_index(150, 120)
    assert (int(i), int(j)) == (4, 4)
    assert checkerboard_assign(grid, 150, 120) == TRAIN


def test_checkerboard_parity_and_range():
    assert checkerboard_assign(CheckerboardGrid(train_parity=1), 10, 5) == TEST
    with pytest.raises(DomainError):
        CheckerboardGrid().cell_index(151, 5)


def test_zero_noise_inputs_equal_truth():
    ds = generate_dataset(0.0, n_per_axis=40, seed=3)
    assert np.array_equal(ds.d_noisy, ds.d_true)
    assert np.array_equal(ds.h_noisy, ds.h_true)


def test_dataset_invariants():
    ds = generate_dataset(0.2, n_per_axis=50, seed=7)
    assert len(ds) == ds.config["retained"] <= ds.config["generated"] == 2500
    assert np.all(ds.b_true <= B_MAX)
    assert np.all((ds.d_true >= D_RANGE[0]) & (ds.d_true <= D_RANGE[1]))
    assert np.all((ds.h_true >= H_RANGE[0]) & (ds.h_true <= H_RANGE[1]))
    assert np.all(ds.d_noisy >= 0) and np.all(ds.h_noisy >= 0)
    assert np.allclose(ds.b_true, biomass(ds.d_true, ds.h_true))
    test = ds.test()
    assert np.array_equal(test.d_noisy, test.d_true)
    assert np.array_equal(test.h_noisy, test.h_true)
    train = ds.train()
    assert np.any(train.d_noisy != train.d_true)
    assert len(train) == pytest.approx(0.8 * len(ds), abs=1)


def test_axes_and_noise_come_from_shared_samplers():
    ds = generate_dataset(0.1, n_per_axis=30, seed=SeedBundle(4))
    bundle = SeedBundle(4)
    rng = bundle.rng("dataset.diameter")
    pool = np.concatenate([sample_gamma(D_GAMMA, 30, rng) for _ in range(10)])
    assert np.isin(np.unique(ds.d_true), pool).all()

    d_axis = sample_in_range(D_GAMMA, D_RANGE, 30, bundle.rng("dataset.diameter"))
    h_axis = sample_in_range(H_GAMMA, H_RANGE, 30, bundle.rng("dataset.height"))
    d_full, h_full = np.repeat(d_axis, 30), np.tile(h_axis, 30)
    noise = bundle.rng("dataset.noise")
    eps_d = sample_gaussian(0.0, 1.0, 900, noise)
    eps_h = sample_gaussian(0.0, 1.0, 900, noise)
    keep = biomass(d_full, h_full) <= B_MAX
    train = ds.split == TRAIN
    assert np.allclose(ds.d_noisy[train], np.maximum(d_full * (1 + 0.1 * eps_d), 0.0)[keep][train])
    assert np.allclose(ds.h_noisy[train], np.maximum(h_full * (1 + 0.1 * eps_h), 0.0)[keep][train])


def test_tree_samples_rebuild_the_dataset():
    ds = generate_dataset(0.05, n_per_axis=20, seed=9)
    rows = ds.samples()
    assert len(rows) == len(ds)
    assert all(isinstance(r, TreeSample) and r.noise_level == 0.05 for r in rows)
    rebuilt = RegressionDataset(
        *(np.array([getattr(r, name) for r in rows]) for name in ("d_true", "h_true", "d_noisy", "h_noisy", "b_true")),
        split=np.array([r.split for r in rows], dtype=object), config=dict(ds.config))
    assert rebuilt.to_frame().equals(ds.to_frame())
    assert rebuilt.samples() == rows


def test_checkerboard_strategy_uses_clean_coordinates():
    ds = generate_dataset(0.1, n_per_axis=40, strategy="checkerboard", seed=5)
    expected = checkerboard_assign(CheckerboardGrid(), ds.d_true, ds.h_true)
    assert np.array_equal(ds.split, np.asarray(expected, dtype=object))


def test_same_seed_same_dataset():
    a = generate_dataset(0.1, n_per_axis=30, seed=11)
    b = generate_dataset(0.1, n_per_axis=30, seed=11)
    assert a.to_frame().equals(b.to_frame())


def test_size_multiplier_scales_generated_rows():
    ds = generate_dataset(0.1, n_per_axis=20, seed=1, size_multiplier=4)
    assert ds.config["generated"] == 4 * 20 * 20


@pytest.mark.parametrize("kwargs", [
    {"alpha": -0.1},
    {"alpha": 0.1, "size_multiplier": 3},
    {"alpha": 0.1, "strategy": "diagonal"},
    {"alpha": 0.1, "n_per_axis": 1},
])
def test_generate_rejects_bad_parameters(kwargs):
    with pytest.raises(ParameterError):
        generate_dataset(**kwargs)


def test_training_size_study_shares_test_set():
    trains, test = training_size_study(0.1, 20, [1, 4], seed=2)
    assert set(trains) == {1, 4}
    assert len(trains[4]) > 3 * len(trains[1])
    assert np.all(test.split == TEST)


def test_save_and_load_dataset(tmp_path):
    ds = generate_dataset(0.05, n_per_axis=25, seed=9)
    paths = save_dataset(ds, str(tmp_path))
    with open(paths["csv"], "r", encoding="utf-8") as f:
        assert f.readline().strip() == "d_true,h_true,d_noisy,h_noisy,b_true,split"
    loaded = load_dataset(str(tmp_path))
    assert loaded.config == ds.config
    assert np.allclose(loaded.b_true, ds.b_true, rtol=1e-9)
    assert list(loaded.split) == list(ds.split)


def test_load_missing_dataset(tmp_path):
    with pytest.raises(MissingArtifactError):
        load_dataset(str(tmp_path / "nowhere"))
