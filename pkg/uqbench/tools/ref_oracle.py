"""Reference aleatoric uncertainty for the regression benchmark.

The oracle simulates dense noisy inputs around every node of a regular
(D, H) lattice, pushes them through the ground-truth biomass model and pools
the squared deviation of the k nearest outputs from the node's TRUE biomass:

    sigma_raw(node) = sqrt(mean_k (B(D', H') - B(node))^2)

Dense sampling: each lattice coordinate c is refined by a relative stencil
c * (1 + w * u), u on a uniform grid over [-1, 1] with n_dense / lattice points
and w = stencil_scale * alpha, so the dense Cartesian product is the union of
one refinement patch per node. Each node draws its input noise from its own
named stream as a scrambled Halton set mapped to normal quantiles, which makes
nodes independent and the estimate monotone in alpha.

The raw table is then smoothed by a least-squares fit of a parametric family
(default sigma = c * (d^2 h)^p) and checked against the first-order
delta-method oracle sigma = 0.976 * alpha * sqrt(5) * B.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import curve_fit
from scipy.special import ndtri
from scipy.stats import qmc

from .biomass_sim import D_RANGE, H_RANGE, RHO, biomass
from .utils.artifacts import read_csv, read_json, write_csv, write_json
from .utils.bench_config import OracleSettings
from .utils.errors import ConfigurationError, ParameterError
from .utils.randkit import SeedBundle, SeedLike
from .utils.table_schema import REFERENCE_COLUMNS, assert_columns

logger = logging.getLogger(__name__)

DELTA_FACTOR = 0.976 * math.sqrt(5.0)
FAMILIES = ("power_d2h", "power_dh")

REFERENCE_CSV = "reference.csv"
REFERENCE_META = "reference.json"


@dataclass
class ReferenceSigmaTable:
    d_axis: np.ndarray
    h_axis: np.ndarray
    sigma_raw: np.ndarray                   # (len(d_axis), len(h_axis))
    alpha: float
    mc_config: Dict = field(default_factory=dict)
    sigma_smoothed: Optional[np.ndarray] = None
    coefficients: Dict = field(default_factory=dict)
    seed: int = 0

    @property
    def n_nodes(self) -> int:
        return self.sigma_raw.size

    def grid(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.d_axis, self.h_axis, indexing="ij")

    def to_frame(self) -> pd.DataFrame:
        dd, hh = self.grid()
        smoothed = self.sigma_smoothed if self.sigma_smoothed is not None else np.full_like(self.sigma_raw, np.nan)
        return pd.DataFrame({
            "d": dd.ravel(), "h": hh.ravel(),
            "sigma_raw": self.sigma_raw.ravel(), "sigma_smoothed": smoothed.ravel(),
        }, columns=list(REFERENCE_COLUMNS))


def lattice_axes(n_nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.linspace(*D_RANGE, n_nodes), np.linspace(*H_RANGE, n_nodes)


def delta_method_sigma(d, h, alpha: float):
    """First-order propagation of sigma_D = alpha D, sigma_H = alpha H through the biomass model."""
    if alpha < 0:
        raise ParameterError(f"Noise level must be >= 0, got {alpha}")
    return DELTA_FACTOR * alpha * biomass(d, h, RHO)


def _stencil(refine: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Relative offsets of one refinement patch and its scale-free neighbour order."""
    u = np.linspace(-1.0, 1.0, refine)
    uu_d, uu_h = np.meshgrid(u, u, indexing="ij")
    return uu_d.ravel(), uu_h.ravel(), u


def _noise_pairs(k: int, rng: np.random.Generator) -> np.ndarray:
    """(2, k) standard-normal input noise from a scrambled Halton set.

    Both coordinates stay N(0, 1) marginally; the k points are low-discrepancy
    over the plane, and the scramble comes from the node's own stream.
    """
    u = qmc.Halton(d=2, scramble=True, seed=rng).random(k)
    return ndtri(np.clip(u, 1e-12, 1.0 - 1e-12)).T


def _node_sigma(d_c: float, h_c: float, alpha: float, width: float, u_d: np.ndarray,
                u_h: np.ndarray, k: int, rng: np.random.Generator) -> float:
    # normalized distance of each patch point to the node; ordering does not depend on width
    dist = (d_c * u_d / (D_RANGE[1] - D_RANGE[0])) ** 2 + (h_c * u_h / (H_RANGE[1] - H_RANGE[0])) ** 2
    nearest = np.argsort(dist, kind="stable")[:k]
    eps = _noise_pairs(k, rng)
    d_dense = np.clip(d_c * (1.0 + width * u_d[nearest]), *D_RANGE)
    h_dense = np.clip(h_c * (1.0 + width * u_h[nearest]), *H_RANGE)
    d_noisy = np.maximum(d_dense * (1.0 + alpha * eps[0]), 0.0)
    h_noisy = np.maximum(h_dense * (1.0 + alpha * eps[1]), 0.0)
    dev = biomass(d_noisy, h_noisy) - biomass(d_c, h_c)
    return float(np.sqrt(np.mean(dev ** 2)))


def point_sigma(d: float, h: float, alpha: float, mc_config: Optional[OracleSettings] = None,
                seed: SeedLike = 7) -> float:
    """Pooled reference sigma at a single (d, h), using the same patch and k as the lattice."""
    mc = mc_config or OracleSettings()
    if alpha < 0:
        raise ParameterError(f"Noise level must be >= 0, got {alpha}")
    refine = max(1, mc.n_dense // mc.lattice)
    if mc.k_neighbors > refine * refine:
        raise ConfigurationError(
            f"k_neighbors={mc.k_neighbors} exceeds the {refine * refine} dense points per node")
    if alpha == 0:
        return 0.0
    bundle = seed if isinstance(seed, SeedBundle) else SeedBundle(int(seed))
    u_d, u_h, _ = _stencil(refine)
    return _node_sigma(float(d), float(h), alpha, mc.stencil_scale * alpha, u_d, u_h,
                       mc.k_neighbors, bundle.rng(f"oracle.point.{d}.{h}"))


def pooled_sigma(alpha: float, mc_config: Optional[OracleSettings] = None,
                 seed: SeedLike = 7) -> ReferenceSigmaTable:
    """Monte-Carlo reference sigma at every lattice node (sigma_smoothed left empty)."""
    mc = mc_config or OracleSettings()
    if alpha < 0:
        raise ParameterError(f"Noise level must be >= 0, got {alpha}")
    if mc.lattice < 2:
        raise ConfigurationError(f"Lattice needs >= 2 nodes per axis, got {mc.lattice}")
    refine = mc.n_dense // mc.lattice
    if refine < 1:
        raise ConfigurationError(f"n_dense={mc.n_dense} is smaller than the lattice ({mc.lattice})")
    if mc.k_neighbors < 1 or mc.k_neighbors > refine * refine:
        raise ConfigurationError(
            f"k_neighbors={mc.k_neighbors} exceeds the {refine * refine} dense points per node")
    bundle = seed if isinstance(seed, SeedBundle) else SeedBundle(int(seed))
    d_axis, h_axis = lattice_axes(mc.lattice)
    config = {"n_dense": mc.n_dense, "k_neighbors": mc.k_neighbors, "lattice": mc.lattice,
              "stencil_scale": mc.stencil_scale, "refine": refine}
    sigma = np.zeros((mc.lattice, mc.lattice))
    if alpha == 0:
        return ReferenceSigmaTable(d_axis, h_axis, sigma, 0.0, config, seed=int(bundle.root_seed))

    u_d, u_h, _ = _stencil(refine)
    width = mc.stencil_scale * alpha

    def run_row(i: int) -> np.ndarray:
        return np.array([
            _node_sigma(d_axis[i], h_axis[j], alpha, width, u_d, u_h, mc.k_neighbors,
                        bundle.rng(f"oracle.node.{i}.{j}"))
            for j in range(mc.lattice)
        ])

    workers = max(1, int(mc.workers))
    if workers == 1:
        rows = [run_row(i) for i in range(mc.lattice)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_row, range(mc.lattice)))
    sigma = np.vstack(rows)
    logger.info(f"✅ Reference sigma alpha={alpha}: {mc.lattice}x{mc.lattice} nodes, k={mc.k_neighbors}")
    return ReferenceSigmaTable(d_axis, h_axis, sigma, float(alpha), config, seed=int(bundle.root_seed))


def _power_d2h(xy, c, p):
    d, h = xy
    return c * (d * d * h) ** p


def _power_dh(xy, c, a, b):
    d, h = xy
    return c * d ** a * h ** b


def fit_family(d: np.ndarray, h: np.ndarray, sigma: np.ndarray, family: str = "power_d2h") -> Dict[str, float]:
    """Least-squares coefficients of the smoothing family; starts from a log-linear fit."""
    if family not in FAMILIES:
        raise ConfigurationError(f"Unknown smoothing family '{family}'")
    positive = sigma > 0
    d, h, sigma = d[positive], h[positive], sigma[positive]
    if family == "power_d2h":
        p0_slope, p0_icpt = np.polyfit(np.log(d * d * h), np.log(sigma), 1)
        popt, _ = curve_fit(_power_d2h, (d, h), sigma, p0=(math.exp(p0_icpt), p0_slope), maxfev=20000)
        return {"c": float(popt[0]), "p": float(popt[1])}
    design = np.column_stack([np.ones_like(d), np.log(d), np.log(h)])
    coef, *_ = np.linalg.lstsq(design, np.log(sigma), rcond=None)
    popt, _ = curve_fit(_power_dh, (d, h), sigma, p0=(math.exp(coef[0]), coef[1], coef[2]), maxfev=20000)
    return {"c": float(popt[0]), "a": float(popt[1]), "b": float(popt[2])}


def evaluate_family(d, h, coefficients: Dict[str, float], family: str = "power_d2h"):
    if family == "power_d2h":
        return _power_d2h((np.asarray(d, float), np.asarray(h, float)), coefficients["c"], coefficients["p"])
    return _power_dh((np.asarray(d, float), np.asarray(h, float)),
                     coefficients["c"], coefficients["a"], coefficients["b"])


def smooth_sigma(table: ReferenceSigmaTable, family: str = "power_d2h") -> ReferenceSigmaTable:
    """Fill sigma_smoothed from a parametric fit over the lattice; all-zero input stays zero."""
    dd, hh = table.grid()
    if not np.any(table.sigma_raw > 0):
        smoothed = np.zeros_like(table.sigma_raw)
        coefficients: Dict = {"family": family}
    else:
        fitted = fit_family(dd.ravel(), hh.ravel(), table.sigma_raw.ravel(), family)
        smoothed = evaluate_family(dd, hh, fitted, family)
        coefficients = dict(fitted, family=family)
    return ReferenceSigmaTable(table.d_axis, table.h_axis, table.sigma_raw, table.alpha,
                               dict(table.mc_config), smoothed, coefficients, table.seed)


def reference_table(alpha: float, mc_config: Optional[OracleSettings] = None,
                    seed: SeedLike = 7) -> ReferenceSigmaTable:
    mc = mc_config or OracleSettings()
    return smooth_sigma(pooled_sigma(alpha, mc, seed), mc.family)


def oracle_agreement(table: ReferenceSigmaTable, smoothed: bool = False) -> Dict[str, float]:
    """Relative deviation of the table from the delta-method oracle over all nodes."""
    dd, hh = table.grid()
    oracle = delta_method_sigma(dd, hh, table.alpha)
    values = table.sigma_smoothed if smoothed else table.sigma_raw
    rel = np.abs(values - oracle) / oracle
    return {
        "within_5pct": float(np.mean(rel <= 0.05)),
        "max_rel": float(rel.max()),
        "rms_dev": float(np.sqrt(np.mean((values - oracle) ** 2))),
    }


def lookup(table: ReferenceSigmaTable, d, h, smoothed: bool = True) -> np.ndarray:
    """Bilinear interpolation of the table at (d, h); points are clamped to the lattice."""
    values = table.sigma_smoothed if smoothed else table.sigma_raw
    if values is None:
        raise ConfigurationError("Table has no smoothed values; run smooth_sigma first")
    interp = RegularGridInterpolator((table.d_axis, table.h_axis), values, method="linear")
    d = np.clip(np.asarray(d, dtype=float), table.d_axis[0], table.d_axis[-1])
    h = np.clip(np.asarray(h, dtype=float), table.h_axis[0], table.h_axis[-1])
    return interp(np.column_stack([np.ravel(d), np.ravel(h)])).reshape(np.shape(d))


def save_table(table: ReferenceSigmaTable, directory: str) -> Dict[str, str]:
    csv_path = write_csv(table.to_frame(), os.path.join(directory, REFERENCE_CSV))
    meta = {"alpha": table.alpha, "mc_config": table.mc_config,
            "coefficients": table.coefficients, "seed": table.seed,
            "lattice": [len(table.d_axis), len(table.h_axis)]}
    meta_path = write_json(meta, os.path.join(directory, REFERENCE_META))
    return {"csv": csv_path, "metadata": meta_path}


def load_table(directory: str) -> ReferenceSigmaTable:
    frame = read_csv(os.path.join(directory, REFERENCE_CSV))
    assert_columns(frame, REFERENCE_COLUMNS, REFERENCE_CSV)
    meta = read_json(os.path.join(directory, REFERENCE_META))
    n_d, n_h = meta["lattice"]
    d_axis = frame["d"].to_numpy(float).reshape(n_d, n_h)[:, 0]
    h_axis = frame["h"].to_numpy(float).reshape(n_d, n_h)[0, :]
    smoothed = frame["sigma_smoothed"].to_numpy(float).reshape(n_d, n_h)
    return ReferenceSigmaTable(
        d_axis, h_axis, frame["sigma_raw"].to_numpy(float).reshape(n_d, n_h), meta["alpha"],
        meta["mc_config"], None if np.all(np.isnan(smoothed)) else smoothed,
        meta["coefficients"], meta["seed"])


__all__ = [
    'DELTA_FACTOR',
    'FAMILIES',
    'ReferenceSigmaTable',
    'lattice_axes',
    'delta_method_sigma',
    'point_sigma',
    'pooled_sigma',
    'fit_family',
    'evaluate_family',
    'smooth_sigma',
    'reference_table',
    'oracle_agreement',
    'lookup',
    'save_table',
    'load_table',
]
