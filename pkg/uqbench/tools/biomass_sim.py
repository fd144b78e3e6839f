"""Regression benchmark generator: tree diameter/height/biomass samples.

Generation flow for one noise level alpha:

    1. draw n diameters and n heights from the fitted three-parameter Gammas,
       rejection-resampling anything outside the variable ranges
    2. form the n x n Cartesian product of (D, H)
    3. add input noise  D' = D + N(0, (alpha D)^2),  H' = H + N(0, (alpha H)^2)
    4. compute the ground-truth biomass from the NOISE-FREE (D, H)
    5. discard pairs whose biomass exceeds the 90th-percentile threshold
    then tag train/test (random 80/20 or checkerboard). Test rows carry
    noise-free inputs.

Units: D in cm, H in m, wood density rho in g/cm^3, biomass B in kg.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .utils.artifacts import read_csv, read_json, write_csv, write_json
from .utils.errors import DomainError, GenerationError, ParameterError
from .utils.randkit import GammaParams, SeedBundle, SeedLike, sample_gamma, sample_gaussian
from .utils.table_schema import DATASET_COLUMNS, assert_columns

logger = logging.getLogger(__name__)

RHO = 0.65
D_RANGE = (5.0, 150.0)
H_RANGE = (1.2, 120.0)
B_MAX = 2236.8
D_GAMMA = GammaParams(shape=0.68, location=5.00, scale=30.18)
H_GAMMA = GammaParams(shape=1.92, location=1.18, scale=7.75)
STRATEGIES = ("random80_20", "checkerboard")
TRAIN, TEST = "train", "test"

DATASET_CSV = "dataset.csv"
DATASET_META = "dataset.json"


def biomass(d, h, rho: float = RHO):
    """0.0673 * (rho * d^2 * h)^0.976; works on scalars and arrays."""
    d_arr = np.asarray(d, dtype=float)
    h_arr = np.asarray(h, dtype=float)
    if np.any(d_arr < 0) or np.any(h_arr < 0):
        raise DomainError("Diameter and height must be non-negative")
    if rho <= 0:
        raise DomainError(f"Wood density must be positive, got {rho}")
    out = 0.0673 * (rho * d_arr ** 2 * h_arr) ** 0.976
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TreeSample:
    d_true: float
    h_true: float
    d_noisy: float
    h_noisy: float
    b_true: float
    noise_level: float
    split: str = TRAIN


@dataclass(frozen=True)
class CheckerboardGrid:
    d_range: Tuple[float, float] = D_RANGE
    h_range: Tuple[float, float] = H_RANGE
    cells_per_axis: int = 5
    train_parity: int = 0

    @property
    def cell_width(self) -> Tuple[float, float]:
        n = self.cells_per_axis
        return ((self.d_range[1] - self.d_range[0]) / n, (self.h_range[1] - self.h_range[0]) / n)

    def cell_index(self, d, h) -> Tuple[np.ndarray, np.ndarray]:
        d = np.asarray(d, dtype=float)
        h = np.asarray(h, dtype=float)
        if (np.any(d < self.d_range[0]) or np.any(d > self.d_range[1])
                or np.any(h < self.h_range[0]) or np.any(h > self.h_range[1])):
            raise DomainError("Point outside the checkerboard ranges")
        wd, wh = self.cell_width
        n = self.cells_per_axis
        # half-open cells, last one closed
        i = np.minimum(np.floor((d - self.d_range[0]) / wd).astype(int), n - 1)
        j = np.minimum(np.floor((h - self.h_range[0]) / wh).astype(int), n - 1)
        return i, j


def checkerboard_assign(grid: CheckerboardGrid, d, h):
    """'train' when (i + j) has the grid's train parity, else 'test'."""
    i, j = grid.cell_index(d, h)
    is_train = (i + j) % 2 == grid.train_parity
    if np.ndim(is_train) == 0:
        return TRAIN if bool(is_train) else TEST
    return np.where(is_train, TRAIN, TEST)


@dataclass
class RegressionDataset:
    """Columnar store of tree samples with one split tag per row."""
    d_true: np.ndarray
    h_true: np.ndarray
    d_noisy: np.ndarray
    h_noisy: np.ndarray
    b_true: np.ndarray
    split: np.ndarray
    config: Dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.b_true)

    @property
    def alpha(self) -> float:
        return float(self.config.get("alpha", 0.0))

    def subset(self, mask: np.ndarray) -> "RegressionDataset":
        return RegressionDataset(self.d_true[mask], self.h_true[mask], self.d_noisy[mask],
                                 self.h_noisy[mask], self.b_true[mask], self.split[mask],
                                 dict(self.config))

    def train(self) -> "RegressionDataset":
        return self.subset(self.split == TRAIN)

    def test(self) -> "RegressionDataset":
        return self.subset(self.split == TEST)

    def inputs(self, noisy: bool = True) -> np.ndarray:
        if noisy:
            return np.column_stack([self.d_noisy, self.h_noisy])
        return np.column_stack([self.d_true, self.h_true])

    def samples(self) -> List[TreeSample]:
        return [TreeSample(*row, noise_level=self.alpha, split=tag) for row, tag in zip(
            zip(self.d_true.tolist(), self.h_true.tolist(), self.d_noisy.tolist(),
                self.h_noisy.tolist(), self.b_true.tolist()), self.split.tolist())]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "d_true": self.d_true, "h_true": self.h_true,
            "d_noisy": self.d_noisy, "h_noisy": self.h_noisy,
            "b_true": self.b_true, "split": self.split,
        }, columns=list(DATASET_COLUMNS))


def sample_in_range(params: GammaParams, bounds: Tuple[float, float], n: int,
                    rng: np.random.Generator) -> np.ndarray:
    """n Gamma draws restricted to ``bounds`` by rejection."""
    out = np.empty(0)
    while len(out) < n:
        draw = sample_gamma(params, max(n, 16), rng)
        keep = draw[(draw >= bounds[0]) & (draw <= bounds[1])]
        out = np.concatenate([out, keep])
    return out[:n]


def _random_split(n: int, rng: np.random.Generator, train_fraction: float = 0.8) -> np.ndarray:
    split = np.full(n, TEST, dtype=object)
    split[rng.permutation(n)[:int(round(train_fraction * n))]] = TRAIN
    return split


def generate_dataset(alpha: float, n_per_axis: int = 200, strategy: str = "random80_20",
                     seed: SeedLike = 7, size_multiplier: int = 1,
                     grid: Optional[CheckerboardGrid] = None) -> RegressionDataset:
    """Build one regression dataset at noise level ``alpha``.

    ``size_multiplier`` (a perfect square) scales the per-axis count by its
    square root so the row count scales by the multiplier before discard.
    """
    if alpha < 0:
        raise ParameterError(f"Noise level must be >= 0, got {alpha}")
    root = int(round(math.sqrt(size_multiplier)))
    if size_multiplier < 1 or root * root != size_multiplier:
        raise ParameterError(f"Size multiplier must be a perfect square, got {size_multiplier}")
    n = int(n_per_axis) * root
    if n < 2:
        raise ParameterError(f"n_per_axis must be >= 2, got {n_per_axis}")
    if strategy not in STRATEGIES:
        raise ParameterError(f"Unknown split strategy '{strategy}'")
    bundle = seed if isinstance(seed, SeedBundle) else SeedBundle(int(seed))
    grid = grid or CheckerboardGrid()

    d_axis = sample_in_range(D_GAMMA, D_RANGE, n, bundle.rng("dataset.diameter"))
    h_axis = sample_in_range(H_GAMMA, H_RANGE, n, bundle.rng("dataset.height"))
    d_true = np.repeat(d_axis, n)
    h_true = np.tile(h_axis, n)

    noise_rng = bundle.rng("dataset.noise")
    d_noisy = np.maximum(d_true + alpha * d_true * sample_gaussian(0.0, 1.0, n * n, noise_rng), 0.0)
    h_noisy = np.maximum(h_true + alpha * h_true * sample_gaussian(0.0, 1.0, n * n, noise_rng), 0.0)

    b_true = biomass(d_true, h_true)
    keep = b_true <= B_MAX
    if not np.any(keep):
        raise GenerationError("Every sample exceeded the biomass threshold")
    d_true, h_true, d_noisy, h_noisy, b_true = (
        a[keep] for a in (d_true, h_true, d_noisy, h_noisy, b_true))

    if strategy == "checkerboard":
        split = np.asarray(checkerboard_assign(grid, d_true, h_true), dtype=object)
    else:
        split = _random_split(len(b_true), bundle.rng("dataset.split"))

    test = split == TEST
    d_noisy = np.where(test, d_true, d_noisy)
    h_noisy = np.where(test, h_true, h_noisy)

    config = {
        "alpha": float(alpha),
        "n_per_axis": int(n_per_axis),
        "size_multiplier": int(size_multiplier),
        "strategy": strategy,
        "seed": int(bundle.root_seed),
        "cells_per_axis": grid.cells_per_axis,
        "train_parity": grid.train_parity,
        "generated": int(n * n),
        "retained": int(len(b_true)),
    }
    logger.info(f"✅ Generated dataset alpha={alpha} strategy={strategy}: "
                f"{config['retained']}/{config['generated']} retained")
    return RegressionDataset(d_true, h_true, d_noisy, h_noisy, b_true, split, config)


def training_size_study(alpha: float, n_per_axis: int, multipliers: Sequence[int],
                        seed: SeedLike = 7, strategy: str = "random80_20"
                        ) -> Tuple[Dict[int, RegressionDataset], RegressionDataset]:
    """One training set per size multiplier plus the shared test set of the x1 dataset."""
    bundle = seed if isinstance(seed, SeedBundle) else SeedBundle(int(seed))
    base = generate_dataset(alpha, n_per_axis, strategy, bundle.child("size.1"), 1)
    test = base.test()
    trains: Dict[int, RegressionDataset] = {}
    for m in multipliers:
        ds = base if m == 1 else generate_dataset(alpha, n_per_axis, strategy,
                                                  bundle.child(f"size.{m}"), m)
        trains[m] = ds.train()
    return trains, test


def save_dataset(ds: RegressionDataset, directory: str) -> Dict[str, str]:
    csv_path = write_csv(ds.to_frame(), os.path.join(directory, DATASET_CSV))
    meta_path = write_json(ds.config, os.path.join(directory, DATASET_META))
    return {"csv": csv_path, "metadata": meta_path}


def load_dataset(directory: str) -> RegressionDataset:
    frame = read_csv(os.path.join(directory, DATASET_CSV))
    assert_columns(frame, DATASET_COLUMNS, DATASET_CSV)
    config = read_json(os.path.join(directory, DATASET_META))
    return RegressionDataset(
        frame["d_true"].to_numpy(float), frame["h_true"].to_numpy(float),
        frame["d_noisy"].to_numpy(float), frame["h_noisy"].to_numpy(float),
        frame["b_true"].to_numpy(float), frame["split"].to_numpy(object), config)


__all__ = [
    'RHO',
    'D_RANGE',
    'H_RANGE',
    'B_MAX',
    'D_GAMMA',
    'H_GAMMA',
    'TRAIN',
    'TEST',
    'biomass',
    'TreeSample',
    'CheckerboardGrid',
    'checkerboard_assign',
    'RegressionDataset',
    'sample_in_range',
    'generate_dataset',
    'training_size_study',
    'save_dataset',
    'load_dataset',
]
