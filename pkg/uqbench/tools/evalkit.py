"""Scoring helpers: R^2, RMSE, %RMSE, bias, per-point uncertainty correlation, histograms."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .utils.errors import ShapeError, UndefinedMetricError
from .utils.table_schema import HISTOGRAM_COLUMNS

logger = logging.getLogger(__name__)

DEFAULT_QUANTILES = (0.05, 0.10, 0.25, 0.50, 0.75, 0.90)


@dataclass
class EvalReport:
    r2: float
    rmse: float
    pct_rmse: float
    bias: float = 0.0
    corr_quantiles: List[Tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _pair(pred, ref, min_len: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.ravel(np.asarray(pred, dtype=float))
    ref = np.ravel(np.asarray(ref, dtype=float))
    if pred.shape != ref.shape:
        raise ShapeError(f"Prediction length {pred.size} != reference length {ref.size}")
    if pred.size < min_len:
        raise UndefinedMetricError(f"Need at least {min_len} values, got {pred.size}")
    return pred, ref


def rmse(pred, ref) -> float:
    pred, ref = _pair(pred, ref)
    return float(np.sqrt(np.mean((pred - ref) ** 2)))


def r_squared(pred, ref) -> float:
    """1 - SS_res / SS_tot, SS_tot taken about the reference mean."""
    pred, ref = _pair(pred, ref, min_len=2)
    ss_tot = float(np.sum((ref - ref.mean()) ** 2))
    if ss_tot == 0:
        raise UndefinedMetricError("R^2 is undefined for a constant reference")
    return 1.0 - float(np.sum((pred - ref) ** 2)) / ss_tot


def pct_rmse(pred, ref) -> float:
    """100 * RMSE / mean(reference)."""
    pred, ref = _pair(pred, ref)
    mean = float(ref.mean())
    if mean == 0:
        raise UndefinedMetricError("%RMSE is undefined for a zero-mean reference")
    return 100.0 * rmse(pred, ref) / mean


def relative_bias(pred, ref) -> float:
    pred, ref = _pair(pred, ref)
    mean = float(ref.mean())
    if mean == 0:
        raise UndefinedMetricError("Relative bias is undefined for a zero-mean reference")
    return float(np.mean(pred - ref)) / mean


def pearson(a, b) -> float:
    a, b = _pair(a, b, min_len=2)
    da, db = a - a.mean(), b - b.mean()
    denom = float(np.sqrt(np.sum(da * da) * np.sum(db * db)))
    if denom == 0:
        raise UndefinedMetricError("Correlation is undefined for a constant vector")
    return float(np.sum(da * db)) / denom


def evaluate(pred, ref, correlations: Optional[np.ndarray] = None,
             quantiles: Sequence[float] = DEFAULT_QUANTILES) -> EvalReport:
    report = EvalReport(r2=r_squared(pred, ref), rmse=rmse(pred, ref),
                        pct_rmse=pct_rmse(pred, ref), bias=relative_bias(pred, ref))
    if correlations is not None and len(correlations):
        report.corr_quantiles = correlation_quantiles(correlations, quantiles)
    return report


@dataclass
class CorrelationResult:
    coefficients: np.ndarray            # one per retained point
    skipped: np.ndarray                 # indices of points with a constant vector
    p10: float

    def share_above(self, threshold: float) -> float:
        if self.coefficients.size == 0:
            return 0.0
        return float(np.mean(self.coefficients > threshold))


def uncertainty_correlation(predicted: np.ndarray, reference: np.ndarray) -> CorrelationResult:
    """Per-point Pearson correlation across noise levels.

    ``predicted`` and ``reference`` are (n_levels, n_points). Points whose
    predicted or reference vector is constant are skipped and reported.
    """
    predicted = np.asarray(predicted, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if predicted.shape != reference.shape or predicted.ndim != 2:
        raise ShapeError(f"Expected matching (levels, points) arrays, got {predicted.shape} and {reference.shape}")
    if predicted.shape[0] < 2:
        raise UndefinedMetricError("Need at least 2 noise levels per point")
    dp = predicted - predicted.mean(axis=0)
    dr = reference - reference.mean(axis=0)
    denom = np.sqrt(np.sum(dp * dp, axis=0) * np.sum(dr * dr, axis=0))
    ok = denom > 0
    coeffs = np.sum(dp * dr, axis=0)[ok] / denom[ok]
    skipped = np.flatnonzero(~ok)
    if skipped.size:
        logger.warning(f"⚠️ Skipped {skipped.size} points with constant uncertainty vectors")
    p10 = float(np.quantile(coeffs, 0.10)) if coeffs.size else float("nan")
    return CorrelationResult(coeffs, skipped, p10)


def correlation_quantiles(coefficients, quantiles: Sequence[float] = DEFAULT_QUANTILES) -> List[Tuple[float, float]]:
    qs = sorted(quantiles)
    values = np.quantile(np.asarray(coefficients, dtype=float), qs)
    return [(float(q), float(v)) for q, v in zip(qs, values)]


def histogram_table(values, bins: int = 20, value_range: Optional[Tuple[float, float]] = None) -> pd.DataFrame:
    counts, edges = np.histogram(np.asarray(values, dtype=float), bins=bins, range=value_range)
    return pd.DataFrame({"bin_left": edges[:-1], "bin_right": edges[1:], "count": counts},
                        columns=list(HISTOGRAM_COLUMNS))


__all__ = [
    'EvalReport',
    'CorrelationResult',
    'rmse',
    'r_squared',
    'pct_rmse',
    'relative_bias',
    'pearson',
    'evaluate',
    'uncertainty_correlation',
    'correlation_quantiles',
    'histogram_table',
]
