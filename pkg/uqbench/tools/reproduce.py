"""Table-shaped experiment drivers.

    regression_job        one (alpha, method, seed): dataset -> reference -> train -> score
    reproduce_table2      every alpha x method, median over seeds
    reproduce_table4      training-size study on a shared test set
    reproduce_table5      segmentation entropy trend (+ per-kind quality)
    reproduce_table6      one-hot vs distributional labels

Jobs are independent; with ``workers > 1`` they run in a process pool. Every
job derives its streams from (root seed, job name) only, so results do not
depend on scheduling.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from . import evalkit, label_uq, seg_entropy
from .biomass_sim import CheckerboardGrid, RegressionDataset, generate_dataset, training_size_study
from .ref_oracle import ReferenceSigmaTable, lookup, reference_table
from .uq_methods import apply_sigma_calibration, fit_sigma_calibration, predict, predict_batch, train_regressor
from .utils.bench_config import BenchConfig
from .utils.randkit import SeedBundle
from .utils.table_schema import REGRESSION_METRIC_COLUMNS, TABLE2_COLUMNS, TABLE4_COLUMNS, ordered

logger = logging.getLogger(__name__)


def dataset_for(cfg: BenchConfig, alpha: float, bundle: SeedBundle, size_multiplier: int = 1) -> RegressionDataset:
    reg = cfg.regression
    grid = CheckerboardGrid(cells_per_axis=reg.cells_per_axis, train_parity=reg.train_parity)
    # one dataset stream for every alpha: same (D, H) draws and split across noise levels
    return generate_dataset(alpha, reg.n_per_axis, reg.strategy, bundle.child("dataset"),
                            size_multiplier, grid)


def score_predictions(preds: pd.DataFrame, table: ReferenceSigmaTable, method: str) -> Dict:
    """Regression metric columns (B and sigma) for one prediction table."""
    sigma_ref = lookup(table, preds["d"].to_numpy(), preds["h"].to_numpy())
    sigma_pred = preds["sigma_a"].to_numpy()
    row = {
        "method": method,
        "b_r2": evalkit.r_squared(preds["b_hat"], preds["b_true"]),
        "b_pct_rmse": evalkit.pct_rmse(preds["b_hat"], preds["b_true"]),
        "sigma_r2": float("nan"),
        "sigma_pct_rmse": float("nan"),
        "sigma_bias": float("nan"),
    }
    if np.any(sigma_ref > 0):
        row.update(sigma_r2=evalkit.r_squared(sigma_pred, sigma_ref),
                   sigma_pct_rmse=evalkit.pct_rmse(sigma_pred, sigma_ref),
                   sigma_bias=evalkit.relative_bias(sigma_pred, sigma_ref))
    return row


def regression_job(cfg: BenchConfig, alpha: float, method: str, seed: int,
                   table: Optional[ReferenceSigmaTable] = None) -> Tuple[Dict, pd.DataFrame]:
    """Train and score one method at one noise level; returns (metric row, predictions)."""
    bundle = SeedBundle(int(seed))
    dataset = dataset_for(cfg, alpha, bundle)
    table = table or reference_table(alpha, cfg.resolved_oracle(), bundle.child(f"oracle.{alpha}"))
    model = train_regressor(dataset, cfg.net, method, bundle.child(f"train.{alpha}"))
    preds = predict_batch(model, method, dataset.test(), cfg.regression.t_samples,
                          bundle.child(f"predict.{alpha}"))
    if cfg.regression.bias_correction:
        train = dataset.train()
        fit = predict(model, method, train.inputs(noisy=False), alpha, cfg.regression.t_samples,
                      bundle.child(f"calibrate.{alpha}"))
        calibration = fit_sigma_calibration(fit.sigma_a, lookup(table, train.d_true, train.h_true))
        preds["sigma_a"] = apply_sigma_calibration(preds["sigma_a"], calibration)
    row = dict(alpha=alpha, **score_predictions(preds, table, method))
    logger.info(f"✅ {method} alpha={alpha} seed={seed}: B R2={row['b_r2']:.4f} sigma R2={row['sigma_r2']:.4f}")
    return row, preds


def _regression_job_args(args) -> Tuple[Dict, pd.DataFrame]:
    return regression_job(*args)


def _run_jobs(func, jobs: List, workers: int) -> List:
    if workers <= 1 or len(jobs) <= 1:
        return [func(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, jobs))


def _median_rows(rows: List[Dict], keys: List[str]) -> pd.DataFrame:
    frame = pd.DataFrame(rows)
    metrics = [c for c in REGRESSION_METRIC_COLUMNS if c != "method"]
    return frame.groupby(keys, sort=False)[metrics].median().reset_index()


def reproduce_table2(cfg: BenchConfig) -> Tuple[pd.DataFrame, Dict[str, evalkit.CorrelationResult]]:
    """Metrics per (alpha, method), plus per-point correlation across alpha for each method."""
    reg = cfg.regression
    seeds = [cfg.seed + s for s in range(max(1, reg.seeds))]
    tables = {(a, s): reference_table(a, cfg.resolved_oracle(), SeedBundle(s).child(f"oracle.{a}"))
              for a in reg.alphas for s in seeds}
    jobs = [(cfg, a, m, s, tables[(a, s)]) for s in seeds for m in reg.methods for a in reg.alphas]
    results = _run_jobs(_regression_job_args, jobs, cfg.workers)

    table2 = _median_rows([row for row, _ in results], ["alpha", "method"])
    table2 = ordered(table2, TABLE2_COLUMNS)

    correlations: Dict[str, evalkit.CorrelationResult] = {}
    first_seed = seeds[0]
    for method in reg.methods:
        picked = [(job[1], preds) for job, (_, preds) in zip(jobs, results)
                  if job[2] == method and job[3] == first_seed]
        if len(picked) < 2:
            continue
        predicted = np.vstack([p["sigma_a"].to_numpy() for _, p in picked])
        reference = np.vstack([lookup(tables[(a, first_seed)], p["d"].to_numpy(), p["h"].to_numpy())
                               for a, p in picked])
        correlations[method] = evalkit.uncertainty_correlation(predicted, reference)
    return table2, correlations


def u_shape(table2: pd.DataFrame, low: float = 0.01, mid: float = 0.10, high: float = 0.20) -> Dict[str, bool]:
    """Per method: sigma %RMSE at ``mid`` strictly below both ends."""
    out = {}
    for method, group in table2.groupby("method", sort=False):
        by_alpha = dict(zip(group["alpha"], group["sigma_pct_rmse"]))
        if all(a in by_alpha for a in (low, mid, high)):
            out[method] = bool(by_alpha[mid] < by_alpha[low] and by_alpha[mid] < by_alpha[high])
    return out


def _size_job(args) -> Dict:
    cfg, method, multiplier, seed = args
    reg = cfg.regression
    alpha = reg.size_study_alpha
    bundle = SeedBundle(int(seed))
    trains, test = training_size_study(alpha, reg.n_per_axis, [multiplier], bundle.child("size_study"),
                                       reg.strategy)
    table = reference_table(alpha, cfg.resolved_oracle(), bundle.child(f"oracle.{alpha}"))
    model = train_regressor(trains[multiplier], cfg.net, method, bundle.child(f"train.x{multiplier}"))
    preds = predict_batch(model, method, test, reg.t_samples, bundle.child("predict.size"))
    return dict(size_multiplier=multiplier, **score_predictions(preds, table, method))


def reproduce_table4(cfg: BenchConfig) -> pd.DataFrame:
    reg = cfg.regression
    seeds = [cfg.seed + s for s in range(max(1, reg.seeds))]
    jobs = [(cfg, m, mult, s) for s in seeds for m in reg.methods for mult in reg.size_multipliers]
    rows = _run_jobs(_size_job, jobs, cfg.workers)
    return ordered(_median_rows(rows, ["size_multiplier", "method"]), TABLE4_COLUMNS)


def size_direction(table4: pd.DataFrame) -> Dict[str, bool]:
    """Per method: sigma R^2 at the largest multiplier >= its value at x1."""
    out = {}
    for method, group in table4.groupby("method", sort=False):
        by_mult = dict(zip(group["size_multiplier"], group["sigma_r2"]))
        if 1 in by_mult and len(by_mult) > 1:
            out[method] = bool(by_mult[max(by_mult)] >= by_mult[1])
    return out


def reproduce_table5(cfg: BenchConfig, replicate_counts: Optional[List[int]] = None
                     ) -> Tuple[pd.DataFrame, pd.DataFrame, Dict]:
    seg = cfg.segmentation
    counts = replicate_counts or sorted({10, seg.replicates})
    table5, summary = seg_entropy.run_entropy_study(seg, SeedBundle(cfg.seed).child("segmentation"), counts)
    table7 = seg_entropy.segmentation_quality(table5)
    summary["reference_increasing"] = entropy_trend(table5)
    return table5, table7, summary


def entropy_trend(table5: pd.DataFrame) -> Dict[str, bool]:
    """Per kind (largest replicate count): reference strictly increasing over the non-zero levels."""
    out = {}
    top = table5["replicates"].max()
    for kind, group in table5[table5["replicates"] == top].groupby("kind", sort=False):
        values = group.sort_values("level")
        values = values[values["level"] > 0]["reference"].to_numpy()
        out[kind] = bool(np.all(np.diff(values) > 0))
    return out


def reproduce_table6(cfg: BenchConfig) -> Tuple[pd.DataFrame, Dict[str, label_uq.CalibrationReport], Dict]:
    table6, reports = label_uq.run_classification_study(cfg.classification,
                                                        SeedBundle(cfg.seed).child("classification"))
    means = table6.groupby("encoding", sort=False)[["ece", "oa", "waa"]].mean()
    summary = {
        "mean_ece": means["ece"].to_dict(),
        "mean_oa": means["oa"].to_dict(),
        "ece_lower_with_distributional": bool(means.loc["distributional", "ece"] < means.loc["one_hot", "ece"]),
        "oa_drop": float(means.loc["one_hot", "oa"] - means.loc["distributional", "oa"]),
    }
    return table6, reports, summary


__all__ = [
    'dataset_for',
    'score_predictions',
    'regression_job',
    'reproduce_table2',
    'u_shape',
    'reproduce_table4',
    'size_direction',
    'reproduce_table5',
    'entropy_trend',
    'reproduce_table6',
]
