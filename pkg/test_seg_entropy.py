"""Segmentation entropy track on toy scenes."""
import inspect
import math

import numpy as np
import pandas as pd
import pytest

from uqbench.tools.seg_entropy import (
    LogitField,
    apply_noise,
    corrupt,
    entropy_from_moments,
    histogram_entropy,
    load_logit_field,
    predicted_entropy_bnn,
    reference_entropy,
    replicate_logits,
    save_logit_field,
    segmentation_quality,
    study_scenes,
    toy_scene,
    train_segmenter,
    window_features,
)
from uqbench.tools.utils.bench_config import SegmentationSettings
from uqbench.tools.utils.randkit import as_generator, sample_gaussian, sample_poisson
from uqbench.tools.utils.errors import DomainError, ParameterError, ShapeError

SMALL = SegmentationSettings(scene_size=32, n_rects=4, train_scenes=2, test_scenes=1,
                             epochs=4, replicates=20, mc_samples=500)


def test_apply_noise_clamps_to_byte_range():
    assert apply_noise(np.array([250]), np.array([20.0]))[0] == 255
    assert apply_noise(np.array([100]), np.array([-10.0]))[0] == 90
    assert apply_noise(np.array([5]), np.array([-10.0]))[0] == 0



def test_apply_noise_is_idempotent_after_clamping():
    rng = np.random.default_rng(12)
    pixels = rng.integers(0, 256, size=(16, 16))
    once = apply_noise(pixels, rng.normal(0.0, 120.0, size=pixels.shape))
    assert np.array_equal(apply_noise(once, 0.0), once)
    assert np.array_equal(apply_noise(apply_noise(once, 400.0), 400.0), np.full(pixels.shape, 255))


def test_intensity_noise_comes_from_shared_samplers():
    scene = toy_scene(1, size=32)
    n = scene.pixels.size
    gaussian = sample_gaussian(0.0, 255.0 * 2 * 0.01, n, as_generator(4, "corrupt")).reshape(scene.shape)
    assert np.array_equal(corrupt(scene, "gaussian", 2, seed=4).pixels, apply_noise(scene.pixels, gaussian))
    counts = sample_poisson(255.0 * 2 * 0.01, n, as_generator(4, "corrupt")).reshape(scene.shape)
    plain = corrupt(scene, "poisson", 2, seed=4, centered_poisson=False)
    assert np.array_equal(plain.pixels, apply_noise(scene.pixels, counts.astype(float)))

@pytest.mark.parametrize("kind", ["gaussian", "poisson", "jitter"])
def test_level_zero_is_identity(kind):
    scene = toy_scene(1, size=32)
    out = corrupt(scene, kind, 0, seed=4)
    assert np.array_equal(out.pixels, scene.pixels)
    assert np.array_equal(out.mask, scene.mask)
    noisy = corrupt(scene, kind, 4, seed=4)
    assert noisy.pixels.dtype == np.uint8 and noisy.shape == scene.shape


def test_corrupt_rejects_bad_arguments():
    scene = toy_scene(1, size=32)
    with pytest.raises(ParameterError):
        corrupt(scene, "blur", 1, seed=0)
    with pytest.raises(ParameterError):
        corrupt(scene, "gaussian", -1, seed=0)


def test_scene_masks():
    assert not toy_scene(2, size=32, n_rects=0).mask.any()
    scene = toy_scene(3, size=48, n_rects=6)
    union = np.zeros(scene.shape, dtype=bool)
    for r0, c0, r1, c1 in scene.rects:
        union[r0:r1, c0:c1] = True
    assert int(scene.mask.sum()) == int(union.sum())
    again = toy_scene(3, size=48, n_rects=6)
    assert np.array_equal(scene.pixels, again.pixels)
    with pytest.raises(ParameterError):
        toy_scene(0, size=16)


def test_histogram_entropy_extremes():
    uniform = np.random.default_rng(0).uniform(size=(1, 200_000))
    assert histogram_entropy(uniform, 50)[0] == pytest.approx(math.log(50), abs=0.01)
    assert histogram_entropy(np.full((2, 100), 0.3), 50).tolist() == [0.0, 0.0]
    assert histogram_entropy(np.ones((1, 10)), 50)[0] == 0.0


def test_identical_replicates_have_zero_entropy():
    reps = np.repeat(np.random.default_rng(1).normal(size=(4, 4, 2, 1)), 5, axis=-1)
    report = reference_entropy(LogitField(replicates=reps), n_samples=100, bins=50, seed=0)
    assert report.patch_value == 0.0


def test_zero_predicted_variance_has_zero_entropy():
    mean = np.random.default_rng(2).normal(size=(3, 3, 2))
    report = predicted_entropy_bnn(LogitField(mean=mean, variance=np.zeros_like(mean)), 100, 50, 0)
    assert report.patch_value == 0.0


def test_same_moments_same_report():
    reps = np.random.default_rng(3).normal(size=(4, 5, 2, 10))
    field = LogitField(replicates=reps)
    mu, var = field.moments()
    ref = reference_entropy(field, 300, 50, seed=9)
    bnn = predicted_entropy_bnn(LogitField(mean=mu, variance=var), 300, 50, seed=9)
    assert np.array_equal(ref.per_pixel, bnn.per_pixel)


def test_binary_classes_share_entropy():
    mean = np.zeros((3, 3, 2))
    mean[..., 0], mean[..., 1] = 1.5, -1.5
    report = entropy_from_moments(mean, np.full_like(mean, 2.0), 1000, 50, seed=1)
    assert np.allclose(report.per_pixel[..., 0], report.per_pixel[..., 1])
    assert report.patch_value > 0


def test_entropy_grows_when_logit_variance_is_scaled_up():
    mean = np.zeros((4, 4, 2))
    base = np.full_like(mean, 0.05)
    values = [entropy_from_moments(mean, c * base, seed=3).patch_value for c in (1.0, 4.0, 10.0)]
    assert values[0] < values[1] < values[2]


def test_default_logit_sample_count():
    for fn in (entropy_from_moments, reference_entropy, predicted_entropy_bnn):
        assert inspect.signature(fn).parameters["n_samples"].default == 5000
    assert SegmentationSettings().mc_samples == 5000


def test_categorical_estimator_runs():
    mean = np.zeros((2, 2, 2))
    report = entropy_from_moments(mean, np.zeros_like(mean), 100, 50, seed=1, estimator="categorical")
    assert np.allclose(report.per_pixel, math.log(2))


def test_entropy_input_validation():
    mean = np.zeros((2, 2, 2))
    with pytest.raises(DomainError):
        entropy_from_moments(mean, -np.ones_like(mean), 100, 50)
    with pytest.raises(ParameterError):
        entropy_from_moments(mean, np.ones_like(mean), 10, 50)
    with pytest.raises(ShapeError):
        entropy_from_moments(np.zeros((2, 2)), np.zeros((2, 2)), 100, 50)
    with pytest.raises(ParameterError):
        reference_entropy(LogitField(replicates=np.zeros((2, 2, 2, 1))))


def test_report_frame_layout():
    report = entropy_from_moments(np.zeros((2, 3, 2)), np.ones((2, 3, 2)), 100, 20, seed=0)
    frame = report.to_frame()
    assert list(frame.columns) == ["row", "col", "class", "entropy"]
    assert len(frame) == 12


def test_window_features_shape():
    feats = window_features(np.arange(36, dtype=np.uint8).reshape(6, 6), radius=2)
    assert feats.shape == (36, 25)
    assert feats.min() >= 0 and feats.max() <= 1


def test_reference_entropy_grows_with_noise():
    train, test = study_scenes(SMALL, 5)
    model = train_segmenter(train, SMALL, 5)
    values = []
    for level in (0, 1, 8):
        reps = replicate_logits(model, test[0], "gaussian", level, SMALL.replicates, SMALL, 6)
        values.append(reference_entropy(reps, SMALL.mc_samples, SMALL.bins, 6).patch_value)
    assert values[0] < 0.02
    assert values[0] < values[1] < values[2]


def test_logit_field_round_trip(tmp_path):
    reps = np.random.default_rng(4).normal(size=(3, 4, 2, 5))
    paths = save_logit_field(LogitField(replicates=reps), str(tmp_path / "logits"))
    assert paths["binary"].endswith(".bin")
    loaded = load_logit_field(str(tmp_path / "logits"))
    assert loaded.replicates.shape == (3, 4, 2, 5)
    assert np.allclose(loaded.replicates, reps, atol=1e-6)


def test_segmentation_quality_table():
    table5 = pd.DataFrame({
        "kind": ["gaussian"] * 3, "level": [1, 2, 4], "replicates": [50] * 3,
        "bnn": [0.1, 0.2, 0.4], "tta": [0.2, 0.2, 0.5], "reference": [0.1, 0.2, 0.4],
    })
    quality = segmentation_quality(table5)
    assert list(quality.columns) == ["kind", "replicates", "method", "r2", "rmse"]
    bnn = quality[quality["method"] == "bnn"].iloc[0]
    assert bnn["r2"] == pytest.approx(1.0) and bnn["rmse"] == pytest.approx(0.0)
    assert len(quality) == 2
