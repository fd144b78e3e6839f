"""Segmentation track: noise corruption, toy scenes and aleatoric entropy.

Reference entropy of a patch, from R noisy replicate runs of the clean model:

    1. feed R corrupted copies of the scene to the baseline segmenter
    2. collect the logits tensor Z of shape (H, W, C, R)
    3. per pixel and class, estimate a Gaussian (mu, sigma^2) over the R runs
    4. draw N logit samples from each Gaussian
    5. softmax every sample across classes
    6. per pixel and class, Shannon entropy (nats) of the N probabilities,
       binned into a fixed histogram over [0, 1]
    7. average all pixel/class entropies into the patch value

The BNN path starts at step 4 from predicted (mu, sigma^2); the TTA path
replaces step 1 with T augmentations of a noisy test view.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from . import evalkit
from .uq_methods import tta_replicates
from .utils import tinynet
from .utils.artifacts import require
from .utils.bench_config import SegmentationSettings
from .utils.errors import DomainError, ParameterError, ShapeError, UndefinedMetricError
from .utils.randkit import SeedBundle, SeedLike, as_generator, sample_gaussian, sample_poisson
from .utils.table_schema import ENTROPY_PIXEL_COLUMNS, TABLE5_COLUMNS, TABLE7_COLUMNS

logger = logging.getLogger(__name__)

KINDS = ("gaussian", "poisson", "jitter")
ESTIMATORS = ("histogram", "categorical")
N_CLASSES = 2
VARIANCE_FLOOR = 1e-12
BNN_VIEW_PAIRS = 2


@dataclass
class ImagePatch:
    pixels: np.ndarray                  # (H, W) uint8
    mask: np.ndarray                    # (H, W) uint8 in {0, 1}
    rects: List[Tuple[int, int, int, int]] = field(default_factory=list)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape


@dataclass
class LogitField:
    """Either per-element moments (H, W, C) or a replicate stack (H, W, C, R)."""
    mean: Optional[np.ndarray] = None
    variance: Optional[np.ndarray] = None
    replicates: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.replicates is not None:
            if self.replicates.ndim != 4:
                raise ShapeError(f"Replicates must be (H, W, C, R), got {self.replicates.shape}")
        elif self.mean is None or self.variance is None:
            raise ShapeError("LogitField needs moments or replicates")
        elif self.mean.shape != self.variance.shape:
            raise ShapeError(f"Mean {self.mean.shape} and variance {self.variance.shape} differ")

    @property
    def n_replicates(self) -> int:
        return 0 if self.replicates is None else self.replicates.shape[-1]

    def moments(self) -> Tuple[np.ndarray, np.ndarray]:
        """(mu, sigma^2) per element; replicate variances below 1e-12 count as zero."""
        if self.replicates is None:
            return self.mean, self.variance
        mu = self.replicates.mean(axis=-1)
        var = self.replicates.var(axis=-1, ddof=1)
        return mu, np.where(var < VARIANCE_FLOOR, 0.0, var)


@dataclass
class EntropyReport:
    per_pixel: np.ndarray               # (H, W, C) nats
    patch_value: float

    def to_frame(self) -> pd.DataFrame:
        rows, cols, classes = np.meshgrid(*(np.arange(n) for n in self.per_pixel.shape), indexing="ij")
        return pd.DataFrame({"row": rows.ravel(), "col": cols.ravel(), "class": classes.ravel(),
                             "entropy": self.per_pixel.ravel()}, columns=list(ENTROPY_PIXEL_COLUMNS))


def apply_noise(pixels: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Add noise and clamp to the 1-byte range."""
    return np.clip(np.rint(np.asarray(pixels, dtype=float) + eps), 0, 255).astype(np.uint8)


def corrupt(patch: ImagePatch, kind: str, level: float, seed: SeedLike,
            level_scale: float = 0.01, centered_poisson: bool = True) -> ImagePatch:
    """Corrupted copy of ``patch``.

    Intensity noise uses n = level * level_scale: gaussian adds N(0, (255 n)^2),
    poisson adds P(255 n) (minus its mean when centered). jitter rotates by
    N(0, level^2) degrees and shifts by N(0, level^2) pixels per axis.
    """
    if kind not in KINDS:
        raise ParameterError(f"Unknown corruption '{kind}'; expected one of {KINDS}")
    if level < 0:
        raise ParameterError(f"Noise level must be >= 0, got {level}")
    if level == 0:
        return ImagePatch(patch.pixels.copy(), patch.mask.copy(), list(patch.rects))
    rng = as_generator(seed, "corrupt")
    pixels = patch.pixels.astype(float)
    if kind == "gaussian":
        eps = sample_gaussian(0.0, 255.0 * level * level_scale, pixels.size, rng).reshape(pixels.shape)
        return ImagePatch(apply_noise(pixels, eps), patch.mask.copy(), list(patch.rects))
    if kind == "poisson":
        lam = 255.0 * level * level_scale
        eps = sample_poisson(lam, pixels.size, rng).reshape(pixels.shape).astype(float)
        if centered_poisson:
            eps -= lam
        return ImagePatch(apply_noise(pixels, eps), patch.mask.copy(), list(patch.rects))
    angle = float(sample_gaussian(0.0, level, 1, rng)[0])
    offset = sample_gaussian(0.0, level, 2, rng)
    moved = ndimage.shift(ndimage.rotate(pixels, angle, reshape=False, order=1, mode="reflect"),
                          offset, order=1, mode="reflect")
    mask = ndimage.shift(ndimage.rotate(patch.mask, angle, reshape=False, order=0, mode="reflect"),
                         offset, order=0, mode="reflect")
    return ImagePatch(apply_noise(moved, 0.0), mask.astype(np.uint8), list(patch.rects))


def toy_scene(seed: SeedLike, size: int = 48, n_rects: int = 6) -> ImagePatch:
    """Bright axis-aligned "buildings" on a smooth darker textured background."""
    if size < 32:
        raise ParameterError(f"Scene size must be >= 32, got {size}")
    rng = as_generator(seed, "scene")
    texture = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma=2.0)
    texture /= max(float(texture.std()), 1e-12)
    pixels = 70.0 + 18.0 * texture
    mask = np.zeros((size, size), dtype=np.uint8)
    rects = []
    for _ in range(n_rects):
        h = int(rng.integers(size // 8, size // 4 + 1))
        w = int(rng.integers(size // 8, size // 4 + 1))
        r0 = int(rng.integers(0, size - h + 1))
        c0 = int(rng.integers(0, size - w + 1))
        rects.append((r0, c0, r0 + h, c0 + w))
        mask[r0:r0 + h, c0:c0 + w] = 1
    roof = 185.0 + 10.0 * texture
    pixels = np.where(mask == 1, roof, pixels)
    return ImagePatch(apply_noise(pixels, 0.0), mask, rects)


def histogram_entropy(samples: np.ndarray, bins: int = 50) -> np.ndarray:
    """Shannon entropy (nats) of the histogram of probabilities along the last axis.

    Bins are equal-width over [0, 1]; a probability of exactly 1 falls in the last bin.
    """
    samples = np.asarray(samples, dtype=float)
    lead = samples.shape[:-1]
    n = samples.shape[-1]
    flat = samples.reshape(-1, n)
    idx = np.minimum((np.clip(flat, 0.0, 1.0) * bins).astype(np.int64), bins - 1)
    idx += np.arange(flat.shape[0])[:, None] * bins
    counts = np.bincount(idx.ravel(), minlength=flat.shape[0] * bins).reshape(-1, bins)
    freq = counts / n
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(freq > 0, -freq * np.log(np.where(freq > 0, freq, 1.0)), 0.0)
    return terms.sum(axis=1).reshape(lead)


def categorical_entropy(probabilities: np.ndarray, class_axis: int = -2) -> np.ndarray:
    """Mean over samples (last axis) of the categorical entropy across classes."""
    p = np.asarray(probabilities, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return terms.sum(axis=class_axis).mean(axis=-1)


def entropy_from_moments(mean: np.ndarray, variance: np.ndarray, n_samples: int = 5000,
                         bins: int = 50, seed: SeedLike = 7, estimator: str = "histogram",
                         rows_per_chunk: int = 8) -> EntropyReport:
    """Sample logits, softmax across classes, and score the spread of the probabilities."""
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    if mean.shape != variance.shape or mean.ndim != 3:
        raise ShapeError(f"Expected matching (H, W, C) moments, got {mean.shape} and {variance.shape}")
    if np.any(variance < 0):
        raise DomainError("Logit variance must be non-negative")
    if n_samples < bins:
        raise ParameterError(f"Need N >= bins, got N={n_samples}, bins={bins}")
    if estimator not in ESTIMATORS:
        raise ParameterError(f"Unknown estimator '{estimator}'")
    rng = as_generator(seed, "entropy.samples")
    std = np.sqrt(variance)
    per_pixel = np.empty(mean.shape)
    for r0 in range(0, mean.shape[0], rows_per_chunk):
        mu = mean[r0:r0 + rows_per_chunk, ..., None]
        sd = std[r0:r0 + rows_per_chunk, ..., None]
        z = mu + sd * rng.standard_normal(mu.shape[:-1] + (n_samples,))
        p = tinynet.softmax(np.moveaxis(z, -2, -1))         # classes last for softmax
        p = np.moveaxis(p, -1, -2)                           # back to (rows, W, C, N)
        if estimator == "histogram":
            per_pixel[r0:r0 + rows_per_chunk] = histogram_entropy(p, bins)
        else:
            per_pixel[r0:r0 + rows_per_chunk] = categorical_entropy(p)[..., None]
    return EntropyReport(per_pixel, float(per_pixel.mean()))


def reference_entropy(replicates: LogitField, n_samples: int = 5000, bins: int = 50,
                      seed: SeedLike = 7, estimator: str = "histogram") -> EntropyReport:
    if replicates.n_replicates < 2:
        raise ParameterError(f"Need R >= 2 replicate runs, got {replicates.n_replicates}")
    mu, var = replicates.moments()
    return entropy_from_moments(mu, var, n_samples, bins, seed, estimator)


def predicted_entropy_bnn(moments: LogitField, n_samples: int = 5000, bins: int = 50,
                          seed: SeedLike = 7, estimator: str = "histogram") -> EntropyReport:
    mu, var = moments.moments()
    return entropy_from_moments(mu, var, n_samples, bins, seed, estimator)


def window_features(pixels: np.ndarray, radius: int = 2) -> np.ndarray:
    """(H*W, (2r+1)^2) intensity windows scaled to [0, 1], reflect-padded at the border."""
    padded = np.pad(np.asarray(pixels, dtype=float) / 255.0, radius, mode="reflect")
    side = 2 * radius + 1
    windows = sliding_window_view(padded, (side, side))
    return windows.reshape(-1, side * side)


def train_segmenter(scenes: Sequence[ImagePatch], settings: SegmentationSettings,
                    seed: SeedLike = 7) -> tinynet.MlpModel:
    """Baseline per-pixel classifier trained on clean scenes."""
    bundle = seed if isinstance(seed, SeedBundle) else SeedBundle(int(seed))
    x = np.vstack([window_features(s.pixels, settings.window_radius) for s in scenes])
    y = np.eye(N_CLASSES)[np.concatenate([s.mask.ravel() for s in scenes]).astype(int)]
    sizes = [x.shape[1]] + list(settings.hidden) + [N_CLASSES]
    model = tinynet.init_model(sizes, dropout_rate=0.0, head="softmax", seed=bundle.child("segmenter"))
    model = tinynet.fit_standardization(model, x)
    trained = tinynet.train(model, tinynet.standardize_x(model, x), y, epochs=settings.epochs,
                            batch=64, step_size=0.05, momentum=0.9, seed=bundle.child("segmenter"))
    logger.info(f"✅ Trained baseline segmenter on {len(scenes)} scenes ({len(x)} pixels)")
    return trained


def segmenter_logits(model: tinynet.MlpModel, patch: ImagePatch, radius: int) -> np.ndarray:
    """(H, W, C) logits; for a logit-Gaussian model only the means."""
    out = tinynet.forward(model, tinynet.standardize_x(model, window_features(patch.pixels, radius)))
    return out[:, :N_CLASSES].reshape(patch.shape + (N_CLASSES,))


def replicate_logits(model: tinynet.MlpModel, patch: ImagePatch, kind: str, level: float,
                     n_replicates: int, settings: SegmentationSettings, seed: SeedLike) -> LogitField:
    """Logits of the model on ``n_replicates`` independently corrupted copies of ``patch``."""
    bundle = seed if isinstance(seed, SeedBundle) else SeedBundle(int(seed))
    stack = [segmenter_logits(model, corrupt(patch, kind, level, bundle.child(f"replicate.{r}"),
                                             settings.level_scale, settings.centered_poisson),
                              settings.window_radius)
             for r in range(n_replicates)]
    return LogitField(replicates=np.stack(stack, axis=-1))


def train_bnn(baseline: tinynet.MlpModel, scenes: Sequence[ImagePatch], kind: str, level: float,
              settings: SegmentationSettings, seed: SeedLike = 7) -> tinynet.MlpModel:
    """Logit-Gaussian segmenter for one (kind, level), warm-started from the baseline.

    Input: one noisy view. Target: baseline logits of an independent noisy view,
    so the predicted variance tracks the spread of the baseline logits under noise.
    """
    bundle = seed if isinstance(seed, SeedBundle) else SeedBundle(int(seed))
    radius = settings.window_radius
    xs, ts = [], []
    for s_idx, scene in enumerate(scenes):
        for pair in range(BNN_VIEW_PAIRS):
            views = bundle.child(f"bnn.{kind}.{level}.{s_idx}.{pair}")
            view_in = corrupt(scene, kind, level, views.child("input"), settings.level_scale,
                              settings.centered_poisson)
            view_target = corrupt(scene, kind, level, views.child("target"), settings.level_scale,
                                  settings.centered_poisson)
            xs.append(window_features(view_in.pixels, radius))
            ts.append(segmenter_logits(baseline, view_target, radius).reshape(-1, N_CLASSES))
    x, t = np.vstack(xs), np.vstack(ts)

    sizes = list(baseline.layer_sizes[:-1]) + [2 * N_CLASSES]
    weights = [w.copy() for w in baseline.weights[:-1]]
    biases = [b.copy() for b in baseline.biases[:-1]]
    last_w = np.vstack([baseline.weights[-1], np.zeros_like(baseline.weights[-1])])
    last_b = np.concatenate([baseline.biases[-1], np.zeros(N_CLASSES)])
    model = tinynet.MlpModel(sizes, weights + [last_w], biases + [last_b], dropout_rate=0.0,
                             head="logit_gaussian", x_shift=baseline.x_shift.copy(),
                             x_scale=baseline.x_scale.copy())
    return tinynet.train(model, tinynet.standardize_x(model, x), t, epochs=settings.bnn_epochs,
                         batch=64, step_size=0.01, momentum=0.9, seed=bundle.child(f"bnn.{kind}.{level}"))


def bnn_moments(model: tinynet.MlpModel, patch: ImagePatch, radius: int) -> LogitField:
    out = tinynet.forward(model, tinynet.standardize_x(model, window_features(patch.pixels, radius)))
    shape = patch.shape + (N_CLASSES,)
    return LogitField(mean=out[:, :N_CLASSES].reshape(shape),
                      variance=np.exp(out[:, N_CLASSES:]).reshape(shape))


def tta_logits(model: tinynet.MlpModel, noisy_view: ImagePatch, kind: str, level: float,
               t_samples: int, settings: SegmentationSettings, seed: SeedLike) -> LogitField:
    """Replicate logits of the baseline over T augmentations of an already noisy view."""
    bundle = seed if isinstance(seed, SeedBundle) else SeedBundle(int(seed))

    def perturb(view: ImagePatch, rng: np.random.Generator) -> ImagePatch:
        return corrupt(view, kind, level, rng, settings.level_scale, settings.centered_poisson)

    stack = tta_replicates(lambda v: segmenter_logits(model, v, settings.window_radius),
                           noisy_view, perturb, t_samples, bundle.rng("tta"))
    return LogitField(replicates=np.moveaxis(stack, 0, -1))


def study_scenes(settings: SegmentationSettings, seed: SeedLike = 7
                 ) -> Tuple[List[ImagePatch], List[ImagePatch]]:
    """(train scenes, test scenes) of an entropy study."""
    bundle = seed if isinstance(seed, SeedBundle) else SeedBundle(int(seed))
    train = [toy_scene(bundle.child(f"scene.train.{i}"), settings.scene_size, settings.n_rects)
             for i in range(settings.train_scenes)]
    test = [toy_scene(bundle.child(f"scene.test.{i}"), settings.scene_size, settings.n_rects)
            for i in range(settings.test_scenes)]
    return train, test


def run_entropy_study(settings: Optional[SegmentationSettings] = None, seed: SeedLike = 7,
                      replicate_counts: Optional[Sequence[int]] = None,
                      with_bnn: bool = True,
                      baseline: Optional[tinynet.MlpModel] = None) -> Tuple[pd.DataFrame, Dict]:
    """Reference, BNN and TTA patch entropy for every (kind, level, replicate count).

    A previously trained ``baseline`` segmenter is reused when given.
    Returns the per-level table and a summary dict for logging.
    """
    settings = settings or SegmentationSettings()
    bundle = seed if isinstance(seed, SeedBundle) else SeedBundle(int(seed))
    counts = sorted(set(replicate_counts or [settings.replicates]))
    train_scenes, test_scenes = study_scenes(settings, bundle)
    if baseline is None:
        baseline = train_segmenter(train_scenes, settings, bundle)
    sample_kw = dict(n_samples=settings.mc_samples, bins=settings.bins, estimator=settings.estimator)

    rows = []
    for kind in settings.kinds:
        for level in settings.levels:
            bnn = train_bnn(baseline, train_scenes, kind, level, settings, bundle) if with_bnn else None
            for n_rep in counts:
                ref_vals, tta_vals, bnn_vals = [], [], []
                for s_idx, scene in enumerate(test_scenes):
                    stream = bundle.child(f"study.{kind}.{level}.{s_idx}")
                    reps = replicate_logits(baseline, scene, kind, level, n_rep, settings, stream.child("ref"))
                    ref_vals.append(reference_entropy(reps, seed=stream.child("ref"), **sample_kw).patch_value)
                    view = corrupt(scene, kind, level, stream.child("view"), settings.level_scale,
                                   settings.centered_poisson)
                    tta = tta_logits(baseline, view, kind, level, n_rep, settings, stream.child("tta"))
                    tta_vals.append(reference_entropy(tta, seed=stream.child("tta"), **sample_kw).patch_value)
                    if bnn is not None:
                        moments = bnn_moments(bnn, view, settings.window_radius)
                        bnn_vals.append(predicted_entropy_bnn(moments, seed=stream.child("bnn"),
                                                              **sample_kw).patch_value)
                rows.append({"kind": kind, "level": level, "replicates": n_rep,
                             "bnn": float(np.mean(bnn_vals)) if bnn_vals else float("nan"),
                             "tta": float(np.mean(tta_vals)), "reference": float(np.mean(ref_vals))})
            logger.info(f"✅ Entropy {kind} level={level} done")
    table = pd.DataFrame(rows, columns=list(TABLE5_COLUMNS))
    summary = {"kinds": list(settings.kinds), "levels": list(settings.levels),
               "replicate_counts": counts, "rows": len(table)}
    return table, summary


def segmentation_quality(table: pd.DataFrame) -> pd.DataFrame:
    """R^2 and RMSE of each predicted-entropy column against the reference across levels."""
    rows = []
    for (kind, n_rep), group in table.groupby(["kind", "replicates"], sort=False):
        for method in ("bnn", "tta"):
            pred, ref = group[method].to_numpy(float), group["reference"].to_numpy(float)
            if np.any(np.isnan(pred)):
                continue
            try:
                r2 = evalkit.r_squared(pred, ref)
            except UndefinedMetricError:
                r2 = float("nan")
            rows.append({"kind": kind, "replicates": int(n_rep), "method": method,
                         "r2": r2, "rmse": evalkit.rmse(pred, ref)})
    return pd.DataFrame(rows, columns=list(TABLE7_COLUMNS))


def save_logit_field(logits: LogitField, path_prefix: str) -> Dict[str, str]:
    """Flat float32 binary plus a JSON sidecar with dimensions and layout order."""
    os.makedirs(os.path.dirname(os.path.abspath(path_prefix)), exist_ok=True)
    if logits.replicates is not None:
        data, layout = logits.replicates, ["H", "W", "C", "R"]
    else:
        data, layout = np.stack([logits.mean, logits.variance], axis=-1), ["H", "W", "C", "moment"]
    bin_path, meta_path = path_prefix + ".bin", path_prefix + ".json"
    data.astype("<f4").tofile(bin_path)
    with open(meta_path, "w", encoding="utf-8") as f:
        json.dump({"shape": list(data.shape), "layout": layout, "dtype": "float32-le"}, f, indent=2)
    return {"binary": bin_path, "metadata": meta_path}


def load_logit_field(path_prefix: str) -> LogitField:
    with open(require(path_prefix + ".json"), "r", encoding="utf-8") as f:
        meta = json.load(f)
    data = np.fromfile(require(path_prefix + ".bin"), dtype="<f4").astype(float).reshape(meta["shape"])
    if meta["layout"][-1] == "R":
        return LogitField(replicates=data)
    return LogitField(mean=data[..., 0], variance=data[..., 1])


__all__ = [
    'KINDS',
    'ESTIMATORS',
    'ImagePatch',
    'LogitField',
    'EntropyReport',
    'apply_noise',
    'corrupt',
    'toy_scene',
    'histogram_entropy',
    'categorical_entropy',
    'entropy_from_moments',
    'reference_entropy',
    'predicted_entropy_bnn',
    'window_features',
    'train_segmenter',
    'segmenter_logits',
    'replicate_logits',
    'train_bnn',
    'bnn_moments',
    'tta_logits',
    'study_scenes',
    'run_entropy_study',
    'segmentation_quality',
    'save_logit_field',
    'load_logit_field',
]
