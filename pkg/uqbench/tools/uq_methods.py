"""UQ inference procedures compared on the regression benchmark.

- mc_dropout: heteroscedastic network, T stochastic passes with dropout active;
  aleatoric = mean predicted variance, epistemic = spread of the predicted means.
- adf: the same topology trained with the input noise variance propagated by
  assumed density filtering as a fixed offset; at test time the propagated
  output variance plus the head's variance gives the aleatoric part and
  dropout over the ADF pass gives the epistemic part.
- tta: deterministic passes over T perturbed copies of the input; the spread
  of the outputs is the (aleatoric) estimate.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np
import pandas as pd

from .biomass_sim import RegressionDataset
from .utils import tinynet
from .utils.bench_config import NetSettings
from .utils.errors import ParameterError, ShapeError
from .utils.randkit import SeedBundle, SeedLike, as_generator
from .utils.table_schema import PREDICTION_COLUMNS

logger = logging.getLogger(__name__)

METHODS = ("mc_dropout", "adf")


@dataclass
class PredictionRecord:
    b_hat: np.ndarray
    sigma_a: np.ndarray
    sigma_e: np.ndarray
    t_samples: int

    def __post_init__(self):
        if np.any(np.asarray(self.sigma_a) < 0) or np.any(np.asarray(self.sigma_e) < 0):
            raise ShapeError("Uncertainties must be non-negative")

    @property
    def sigma_total(self) -> np.ndarray:
        return np.sqrt(self.sigma_a ** 2 + self.sigma_e ** 2)


@dataclass(frozen=True)
class AugmentationSpec:
    """Gaussian input perturbation with std ``relative * |x| + absolute`` per feature."""
    relative: float = 0.0
    absolute: float = 0.0

    def draw(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        std = self.relative * np.abs(x) + self.absolute
        return x + std * rng.standard_normal(x.shape)


def _check_t(t_samples: int) -> int:
    if int(t_samples) < 2:
        raise ParameterError(f"Need T >= 2 passes, got {t_samples}")
    return int(t_samples)


def combine_passes(b_samples: np.ndarray, var_samples: np.ndarray) -> PredictionRecord:
    """Decompose T passes into aleatoric and epistemic parts.

    ``b_samples`` and ``var_samples`` are (T, n). sigma_a^2 is the mean
    predicted variance; sigma_e^2 = mean(b^2) - mean(b)^2.
    """
    b = np.asarray(b_samples, dtype=float)
    v = np.asarray(var_samples, dtype=float)
    b_hat = b.mean(axis=0)
    sigma_e2 = np.maximum(np.mean(b * b, axis=0) - b_hat ** 2, 0.0)
    return PredictionRecord(b_hat, np.sqrt(np.mean(v, axis=0)), np.sqrt(sigma_e2), b.shape[0])


def _adf_offset_fn(alpha: float) -> Callable[[tinynet.MlpModel, np.ndarray], np.ndarray]:
    """Propagated output variance of the standardized target for inputs with std alpha*x."""
    def offset(model: tinynet.MlpModel, xb: np.ndarray) -> np.ndarray:
        x_raw = xb * model.x_scale + model.x_shift
        x_var = tinynet.standardize_x_var(model, (alpha * x_raw) ** 2)
        return tinynet.forward_adf(model, xb, x_var).variance[:, 0]
    return offset


def train_regressor(dataset: RegressionDataset, net: Optional[NetSettings] = None,
                    method: str = "mc_dropout", seed: SeedLike = 7) -> tinynet.MlpModel:
    """Train the heteroscedastic MLP on the dataset's train split.

    Inputs are the noisy (d, h); the target is the noise-free biomass. Both are
    standardized with train-split statistics stored on the model.
    """
    if method not in METHODS:
        raise ParameterError(f"Unknown method '{method}'; expected one of {METHODS}")
    net = net or NetSettings()
    bundle = seed if isinstance(seed, SeedBundle) else SeedBundle(int(seed))
    train = dataset.train()
    x, y = train.inputs(noisy=True), train.b_true
    sizes = [2] + list(net.hidden) + [2]
    model = tinynet.init_model(sizes, net.dropout, "heteroscedastic", bundle.child(method))
    model = tinynet.fit_standardization(model, x, y)
    offset_fn = _adf_offset_fn(dataset.alpha) if method == "adf" else None
    trained = tinynet.train(
        model, tinynet.standardize_x(model, x), tinynet.standardize_y(model, y),
        epochs=net.epochs, batch=net.batch, step_size=net.step_size, momentum=net.momentum,
        seed=bundle.child(method), var_offset_fn=offset_fn)
    trained.training.update(method=method, alpha=dataset.alpha)
    history = trained.training.get("loss_history") or [float("nan")]
    logger.info(f"✅ Trained {method} alpha={dataset.alpha}: final loss {history[-1]:.4f}")
    return trained


def predict_mc_dropout(model: tinynet.MlpModel, x: np.ndarray, t_samples: int = 50,
                       seed: SeedLike = 7) -> PredictionRecord:
    t_samples = _check_t(t_samples)
    rng = as_generator(seed, "predict.mc")
    xs = tinynet.standardize_x(model, np.atleast_2d(x))
    b_list, v_list = [], []
    for _ in range(t_samples):
        out = tinynet.forward_dropout(model, xs, rng)
        b, v = tinynet.regression_outputs(model, out)
        b_list.append(b)
        v_list.append(v)
    return combine_passes(np.stack(b_list), np.stack(v_list))


def predict_adf(model: tinynet.MlpModel, x_mean: np.ndarray, x_var: np.ndarray,
                t_samples: int = 50, seed: SeedLike = 7) -> PredictionRecord:
    """ADF passes with sampled dropout masks.

    Per pass the aleatoric variance is the propagated variance of output[0]
    plus E[exp(s)] for the log-variance output s ~ N(mu_1, v_1).
    """
    t_samples = _check_t(t_samples)
    rng = as_generator(seed, "predict.adf")
    xs = tinynet.standardize_x(model, np.atleast_2d(x_mean))
    vs = tinynet.standardize_x_var(model, np.broadcast_to(x_var, np.shape(np.atleast_2d(x_mean))))
    b_list, v_list = [], []
    for _ in range(t_samples):
        act = tinynet.forward_adf(model, xs, vs, tinynet.dropout_masks(model, len(xs), rng))
        b_list.append(model.y_shift + model.y_scale * act.mean[:, 0])
        head_var = np.exp(act.mean[:, 1] + 0.5 * act.variance[:, 1])
        v_list.append((act.variance[:, 0] + head_var) * model.y_scale ** 2)
    return combine_passes(np.stack(b_list), np.stack(v_list))


def tta_replicates(forward_fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                   perturb: Callable[[np.ndarray, np.random.Generator], np.ndarray],
                   t_samples: int, seed: SeedLike = 7) -> np.ndarray:
    """Stack of ``forward_fn(perturb(x))`` over T draws, shape (T, ...)."""
    t_samples = _check_t(t_samples)
    rng = as_generator(seed, "predict.tta")
    return np.stack([forward_fn(perturb(x, rng)) for _ in range(t_samples)])


def predict_tta(model: tinynet.MlpModel, x: np.ndarray, augmentation: AugmentationSpec,
                t_samples: int = 50, seed: SeedLike = 7) -> PredictionRecord:
    """Mean and spread of the predicted target over T augmented copies of raw inputs x."""
    x = np.atleast_2d(np.asarray(x, dtype=float))

    def predict_b(xa: np.ndarray) -> np.ndarray:
        b, _ = tinynet.regression_outputs(model, tinynet.forward(model, tinynet.standardize_x(model, xa)))
        return b

    b = tta_replicates(predict_b, x, augmentation.draw, t_samples, seed)
    b_hat = b.mean(axis=0)
    spread = np.sqrt(np.maximum(np.mean(b * b, axis=0) - b_hat ** 2, 0.0))
    return PredictionRecord(b_hat, spread, np.zeros_like(b_hat), t_samples)


def predict(model: tinynet.MlpModel, method: str, x: np.ndarray, alpha: float,
            t_samples: int = 50, seed: SeedLike = 7) -> PredictionRecord:
    if method == "mc_dropout":
        return predict_mc_dropout(model, x, t_samples, seed)
    if method == "adf":
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return predict_adf(model, x, (alpha * x) ** 2, t_samples, seed)
    if method == "tta":
        return predict_tta(model, x, AugmentationSpec(relative=alpha), t_samples, seed)
    raise ParameterError(f"Unknown method '{method}'")


def predict_batch(model: tinynet.MlpModel, method: str, test: RegressionDataset,
                  t_samples: int = 50, seed: SeedLike = 7) -> pd.DataFrame:
    """Predictions on noise-free test inputs as a ``d,h,b_true,b_hat,sigma_a,sigma_e`` table."""
    record = predict(model, method, test.inputs(noisy=False), test.alpha, t_samples, seed)
    return pd.DataFrame({
        "d": test.d_true, "h": test.h_true, "b_true": test.b_true,
        "b_hat": record.b_hat, "sigma_a": record.sigma_a, "sigma_e": record.sigma_e,
    }, columns=list(PREDICTION_COLUMNS))


def fit_sigma_calibration(sigma_pred, sigma_ref) -> Dict[str, float]:
    """Least-squares scale s minimizing ||s * sigma_pred - sigma_ref||."""
    p = np.ravel(np.asarray(sigma_pred, dtype=float))
    r = np.ravel(np.asarray(sigma_ref, dtype=float))
    denom = float(np.sum(p * p))
    return {"scale": float(np.sum(p * r)) / denom if denom > 0 else 1.0}


def apply_sigma_calibration(sigma_pred, calibration: Dict[str, float]) -> np.ndarray:
    return calibration["scale"] * np.asarray(sigma_pred, dtype=float)


__all__ = [
    'METHODS',
    'PredictionRecord',
    'AugmentationSpec',
    'combine_passes',
    'train_regressor',
    'predict_mc_dropout',
    'predict_adf',
    'tta_replicates',
    'predict_tta',
    'predict',
    'predict_batch',
    'fit_sigma_calibration',
    'apply_sigma_calibration',
]
