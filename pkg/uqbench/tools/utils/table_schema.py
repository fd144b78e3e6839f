"""Canonical column schemas for every CSV the benchmark reads or writes.

Update here if a file layout changes; readers validate headers against these
tuples so a stale file fails loudly instead of being misread.
"""
from typing import Iterable, Sequence

import pandas as pd

from .errors import ShapeError

# Regression dataset rows
DATASET_COLUMNS = ("d_true", "h_true", "d_noisy", "h_noisy", "b_true", "split")

# Reference sigma table, one row per lattice node
REFERENCE_COLUMNS = ("d", "h", "sigma_raw", "sigma_smoothed")

# Batch predictions of a UQ method on test points
PREDICTION_COLUMNS = ("d", "h", "b_true", "b_hat", "sigma_a", "sigma_e")

# Toy segmentation scene, one row per pixel
SCENE_COLUMNS = ("row", "col", "pixel", "mask")

# Histogram data behind the SVG plots
HISTOGRAM_COLUMNS = ("bin_left", "bin_right", "count")

# Regression result tables, by noise level and by training size
REGRESSION_METRIC_COLUMNS = ("method", "b_r2", "b_pct_rmse", "sigma_r2", "sigma_pct_rmse", "sigma_bias")
TABLE2_COLUMNS = ("alpha",) + REGRESSION_METRIC_COLUMNS
TABLE4_COLUMNS = ("size_multiplier",) + REGRESSION_METRIC_COLUMNS

# Segmentation entropy tables
ENTROPY_PIXEL_COLUMNS = ("row", "col", "class", "entropy")
TABLE5_COLUMNS = ("kind", "level", "replicates", "bnn", "tta", "reference")
TABLE7_COLUMNS = ("kind", "replicates", "method", "r2", "rmse")

# Classification
TABLE6_COLUMNS = ("encoding", "seed", "ce_one_hot", "ce_distr", "ece", "oa", "waa")


def vote_columns(k_classes: int) -> tuple:
    """``item_id,true_class,c1..cK`` for a K-class vote corpus."""
    return ("item_id", "true_class") + tuple(f"c{k}" for k in range(1, k_classes + 1))


def feature_columns(dim: int) -> tuple:
    return ("item_id",) + tuple(f"f{k}" for k in range(1, dim + 1))


def assert_columns(frame: pd.DataFrame, expected: Sequence[str], source: str = "table") -> None:
    """Ensure a loaded table has exactly the expected header, in order.

    Raises ShapeError on mismatch.
    """
    found = tuple(frame.columns)
    if found != tuple(expected):
        raise ShapeError(f"{source} has columns {found}; expected {tuple(expected)}")


def ordered(frame: pd.DataFrame, columns: Iterable[str]) -> pd.DataFrame:
    """Select columns in canonical order (missing ones raise)."""
    columns = list(columns)
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ShapeError(f"Missing columns {missing}")
    return frame.loc[:, columns]


__all__ = [
    'DATASET_COLUMNS',
    'REFERENCE_COLUMNS',
    'PREDICTION_COLUMNS',
    'SCENE_COLUMNS',
    'HISTOGRAM_COLUMNS',
    'REGRESSION_METRIC_COLUMNS',
    'TABLE2_COLUMNS',
    'TABLE4_COLUMNS',
    'ENTROPY_PIXEL_COLUMNS',
    'TABLE5_COLUMNS',
    'TABLE7_COLUMNS',
    'TABLE6_COLUMNS',
    'vote_columns',
    'feature_columns',
    'assert_columns',
    'ordered',
]
