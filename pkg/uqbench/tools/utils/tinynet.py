"""Minimal feed-forward network with exact backpropagation.

Layers are affine maps ``z = a W^T + b`` with a rectifier on every hidden layer
and identity on the output. Three output heads are supported:

    heteroscedastic  output[0] = predicted target, output[1] = log-variance
    softmax          K logits, trained with cross-entropy / KL against a label distribution
    logit_gaussian   C logit means followed by C logit log-variances

Dropout is inverted (kept units are scaled by 1/(1-p)) and sits after the
rectifier of each hidden layer, so a test-time pass with a sampled mask keeps
"90% of the neurons" at the training scale.

``forward_adf`` propagates a diagonal Gaussian (mean, variance) through the same
layers: affine maps push (mu, v) to (mu W^T + b, v (W*W)^T) and each rectifier
uses the exact rectified-Gaussian moments.
"""
from __future__ import annotations

import copy
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtr

from .errors import DomainError, MissingArtifactError, ShapeError, TrainingError
from .randkit import SeedBundle, SeedLike, as_generator

logger = logging.getLogger(__name__)

HEADS = ("heteroscedastic", "softmax", "logit_gaussian")
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass
class MlpModel:
    layer_sizes: List[int]
    weights: List[np.ndarray]           # layer l: (layer_sizes[l+1], layer_sizes[l])
    biases: List[np.ndarray]
    dropout_rate: float = 0.10
    head: str = "heteroscedastic"
    x_shift: np.ndarray = field(default_factory=lambda: np.zeros(0))
    x_scale: np.ndarray = field(default_factory=lambda: np.zeros(0))
    y_shift: float = 0.0
    y_scale: float = 1.0
    training: Dict = field(default_factory=dict)

    def __post_init__(self):
        n_in = self.layer_sizes[0]
        if self.x_shift.size == 0:
            self.x_shift = np.zeros(n_in)
        if self.x_scale.size == 0:
            self.x_scale = np.ones(n_in)
        self.validate()

    def validate(self) -> "MlpModel":
        if self.head not in HEADS:
            raise ShapeError(f"Unknown head '{self.head}'")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ShapeError("Layer count does not match layer_sizes")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[l + 1], self.layer_sizes[l])
            if w.shape != expected or b.shape != (expected[0],):
                raise ShapeError(f"Layer {l}: weight {w.shape}, bias {b.shape}; expected {expected}")
        n_out = self.layer_sizes[-1]
        if self.head == "heteroscedastic" and n_out != 2:
            raise ShapeError(f"Heteroscedastic head needs 2 outputs, got {n_out}")
        if self.head == "logit_gaussian" and n_out % 2:
            raise ShapeError(f"Logit-Gaussian head needs an even output count, got {n_out}")
        return self

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def hidden_sizes(self) -> List[int]:
        return list(self.layer_sizes[1:-1])

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)


@dataclass
class GaussianActivation:
    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        if np.any(self.variance < 0):
            raise DomainError("Activation variance must be non-negative")


@dataclass
class Gradients:
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def global_norm(self) -> float:
        return math.sqrt(sum(float(np.sum(g * g)) for g in self.weights + self.biases))


def init_model(layer_sizes: Sequence[int], dropout_rate: float = 0.10,
               head: str = "heteroscedastic", seed: SeedLike = 0) -> MlpModel:
    """He-uniform weights, zero biases."""
    rng = as_generator(seed, "net.init")
    weights, biases = [], []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = math.sqrt(6.0 / n_in)
        weights.append(rng.uniform(-limit, limit, size=(n_out, n_in)))
        biases.append(np.zeros(n_out))
    return MlpModel(list(layer_sizes), weights, biases, dropout_rate=dropout_rate, head=head)


def _as_batch(model: MlpModel, x: np.ndarray) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != model.layer_sizes[0]:
        raise ShapeError(f"Input shape {x.shape} does not match input size {model.layer_sizes[0]}")
    return batch, single


def dropout_masks(model: MlpModel, n: int, rng: np.random.Generator) -> Optional[List[np.ndarray]]:
    """One inverted-dropout mask per hidden layer, values 0 or 1/(1-p)."""
    p = model.dropout_rate
    if p <= 0:
        return None
    keep = 1.0 - p
    return [(rng.random((n, size)) < keep) / keep for size in model.hidden_sizes]


def _forward_cached(model: MlpModel, x: np.ndarray,
                    masks: Optional[List[np.ndarray]] = None) -> Tuple[np.ndarray, list]:
    a = x
    cache = []
    for l in range(model.n_layers):
        z = a @ model.weights[l].T + model.biases[l]
        cache.append((a, z))
        if l < model.n_layers - 1:
            a = np.maximum(z, 0.0)
            if masks is not None:
                a = a * masks[l]
        else:
            a = z
    return a, cache


def forward(model: MlpModel, x: np.ndarray, masks: Optional[List[np.ndarray]] = None) -> np.ndarray:
    """Network output for one input vector or a batch; no dropout unless masks are given."""
    batch, single = _as_batch(model, x)
    out, _ = _forward_cached(model, batch, masks)
    return out[0] if single else out


def forward_dropout(model: MlpModel, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One stochastic pass with freshly sampled dropout masks."""
    batch, single = _as_batch(model, x)
    out = forward(model, batch, dropout_masks(model, len(batch), rng))
    return out[0] if single else out


def relu_moments(mean: np.ndarray, variance: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and variance of max(0, X) for X ~ N(mean, variance), elementwise."""
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    std = np.sqrt(variance)
    degenerate = std == 0
    safe_std = np.where(degenerate, 1.0, std)
    ratio = mean / safe_std
    cdf = ndtr(ratio)
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * ratio ** 2)
    out_mean = mean * cdf + std * pdf
    second = (mean ** 2 + variance) * cdf + mean * std * pdf
    out_var = np.maximum(second - out_mean ** 2, 0.0)
    out_mean = np.where(degenerate, np.maximum(mean, 0.0), out_mean)
    out_var = np.where(degenerate, 0.0, out_var)
    return out_mean, out_var


def forward_adf(model: MlpModel, x_mean: np.ndarray, x_var: np.ndarray,
                masks: Optional[List[np.ndarray]] = None) -> GaussianActivation:
    """Propagate a diagonal Gaussian input through the network.

    With ``masks`` each hidden unit's moments are scaled by its mask value m
    (mean by m, variance by m**2), i.e. one sampled dropout configuration.
    """
    mu, single = _as_batch(model, x_mean)
    var = np.broadcast_to(np.asarray(x_var, dtype=float), np.shape(x_mean))
    if np.any(var < 0):
        raise DomainError("Input variance must be non-negative")
    var = var[None, :] if single else np.array(var)
    for l in range(model.n_layers):
        w = model.weights[l]
        mu = mu @ w.T + model.biases[l]
        var = var @ (w * w).T
        if l < model.n_layers - 1:
            mu, var = relu_moments(mu, var)
            if masks is not None:
                mu = mu * masks[l]
                var = var * masks[l] ** 2
    if single:
        return GaussianActivation(mu[0], var[0])
    return GaussianActivation(mu, var)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - np.max(z, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def loss_nll(b_true, b_hat, log_var, var_offset=0.0) -> float:
    """Mean heteroscedastic negative log-likelihood (constant dropped).

    ``0.5 * exp(-s) * (y - b)**2 + 0.5 * s`` per sample. A non-zero
    ``var_offset`` adds a fixed variance: ``0.5 * r**2 / S + 0.5 * log S`` with
    ``S = exp(s) + offset``.
    """
    r = np.asarray(b_true, dtype=float) - np.asarray(b_hat, dtype=float)
    s = np.asarray(log_var, dtype=float)
    offset = np.asarray(var_offset, dtype=float)
    if np.all(offset == 0):
        per = 0.5 * np.exp(-s) * r ** 2 + 0.5 * s
    else:
        total = np.exp(s) + offset
        per = 0.5 * r ** 2 / total + 0.5 * np.log(total)
    return float(np.mean(per))


def loss_distribution(y_target: np.ndarray, logits: np.ndarray) -> float:
    """Mean KL(y_target || softmax(logits)); equals cross-entropy for one-hot targets."""
    y = np.asarray(y_target, dtype=float)
    logp = log_softmax(logits)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * (np.log(np.where(y > 0, y, 1.0)) - logp), 0.0)
    return float(np.mean(np.sum(term, axis=-1)))


def loss_logit_gaussian(target_logits: np.ndarray, out: np.ndarray) -> float:
    c = out.shape[-1] // 2
    mu, s = out[..., :c], out[..., c:]
    per = 0.5 * np.exp(-s) * (target_logits - mu) ** 2 + 0.5 * s
    return float(np.mean(np.sum(per, axis=-1)))


def head_loss(model: MlpModel, out: np.ndarray, target: np.ndarray,
              var_offset: Optional[np.ndarray] = None) -> Tuple[float, np.ndarray]:
    """Batch loss of the model's head and its gradient w.r.t. the raw outputs."""
    n = out.shape[0]
    target = np.asarray(target, dtype=float)
    if model.head == "heteroscedastic":
        y = target.reshape(n)
        b, s = out[:, 0], out[:, 1]
        r = y - b
        dout = np.zeros_like(out)
        if var_offset is None:
            inv = np.exp(-s)
            loss = loss_nll(y, b, s)
            dout[:, 0] = -inv * r / n
            dout[:, 1] = 0.5 * (1.0 - inv * r ** 2) / n
        else:
            es = np.exp(s)
            total = es + var_offset
            loss = loss_nll(y, b, s, var_offset)
            dout[:, 0] = -r / total / n
            dout[:, 1] = 0.5 * es * (1.0 / total - r ** 2 / total ** 2) / n
        return loss, dout
    if model.head == "softmax":
        if target.shape != out.shape:
            raise ShapeError(f"Target shape {target.shape} does not match logits {out.shape}")
        return loss_distribution(target, out), (softmax(out) - target) / n
    c = out.shape[1] // 2
    mu, s = out[:, :c], out[:, c:]
    inv = np.exp(-s)
    r = target - mu
    dout = np.concatenate([-inv * r / n, 0.5 * (1.0 - inv * r ** 2) / n], axis=1)
    return loss_logit_gaussian(target, out), dout


def _backprop(model: MlpModel, cache: list, dout: np.ndarray,
              masks: Optional[List[np.ndarray]] = None) -> Gradients:
    dw: List[np.ndarray] = [None] * model.n_layers
    db: List[np.ndarray] = [None] * model.n_layers
    dz = dout
    for l in reversed(range(model.n_layers)):
        a_in, _ = cache[l]
        dw[l] = dz.T @ a_in
        db[l] = dz.sum(axis=0)
        if l == 0:
            break
        da = dz @ model.weights[l]
        if masks is not None:
            da = da * masks[l - 1]
        _, z_prev = cache[l - 1]
        dz = da * (z_prev > 0)
    return Gradients(dw, db)


def backward(model: MlpModel, x: np.ndarray, target: np.ndarray,
             masks: Optional[List[np.ndarray]] = None,
             var_offset: Optional[np.ndarray] = None) -> Tuple[float, Gradients]:
    """Exact gradients of the mean head loss over the batch ``(x, target)``."""
    batch, _ = _as_batch(model, x)
    if len(batch) == 0:
        raise ShapeError("Empty batch")
    out, cache = _forward_cached(model, batch, masks)
    loss, dout = head_loss(model, out, target, var_offset)
    return loss, _backprop(model, cache, dout, masks)


def _streams(seed: SeedLike) -> Tuple[np.random.Generator, np.random.Generator]:
    if isinstance(seed, np.random.Generator):
        return seed, seed
    bundle = seed if isinstance(seed, SeedBundle) else SeedBundle(int(seed))
    return bundle.rng("net.shuffle"), bundle.rng("net.dropout")


def train(model: MlpModel, x: np.ndarray, target: np.ndarray, *, epochs: int = 60,
          batch: int = 64, step_size: float = 0.01, momentum: float = 0.9,
          seed: SeedLike = 0, decay_at: Sequence[float] = (0.5, 0.75), decay_factor: float = 0.5,
          clip_norm: Optional[float] = 5.0,
          var_offset_fn: Optional[Callable[[MlpModel, np.ndarray], np.ndarray]] = None) -> MlpModel:
    """Mini-batch SGD with momentum; returns a trained copy.

    ``x`` and ``target`` are already in the network's (standardized) units.
    ``var_offset_fn(model, xb)`` supplies a per-sample variance added to the
    predicted one for the heteroscedastic loss; it is evaluated with the
    current weights and treated as a constant.
    Raises TrainingError on a non-finite loss.
    """
    trained = model.copy()
    x = np.asarray(x, dtype=float)
    target = np.asarray(target, dtype=float)
    n = len(x)
    if n == 0:
        raise ShapeError("No training samples")
    shuffle_rng, dropout_rng = _streams(seed)
    velocity_w = [np.zeros_like(w) for w in trained.weights]
    velocity_b = [np.zeros_like(b) for b in trained.biases]
    decay_epochs = {int(round(f * epochs)) for f in decay_at if 0 < f < 1}
    history: List[float] = []
    lr = step_size
    step = 0
    for epoch in range(epochs):
        if epoch in decay_epochs:
            lr *= decay_factor
        order = shuffle_rng.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            xb, tb = x[idx], target[idx]
            masks = dropout_masks(trained, len(idx), dropout_rng)
            offset = var_offset_fn(trained, xb) if var_offset_fn is not None else None
            loss, grads = backward(trained, xb, tb, masks, offset)
            step += 1
            if not np.isfinite(loss):
                raise TrainingError(f"Non-finite loss {loss} in epoch {epoch}", step=step)
            scale = 1.0
            if clip_norm is not None:
                norm = grads.global_norm()
                if norm > clip_norm:
                    scale = clip_norm / norm
            for l in range(trained.n_layers):
                velocity_w[l] = momentum * velocity_w[l] - lr * scale * grads.weights[l]
                velocity_b[l] = momentum * velocity_b[l] - lr * scale * grads.biases[l]
                trained.weights[l] += velocity_w[l]
                trained.biases[l] += velocity_b[l]
            total += loss * len(idx)
            seen += len(idx)
        history.append(total / seen)
        logger.debug(f"epoch {epoch + 1}/{epochs} loss={history[-1]:.5f}")
    trained.training = dict(trained.training, epochs=epochs, batch=batch, step_size=step_size,
                            momentum=momentum, loss_history=history)
    return trained


def fit_standardization(model: MlpModel, x: np.ndarray, y: Optional[np.ndarray] = None) -> MlpModel:
    """Return a copy carrying train-split shift/scale for inputs and (optionally) target."""
    fitted = model.copy()
    x = np.asarray(x, dtype=float)
    fitted.x_shift = x.mean(axis=0)
    fitted.x_scale = np.where(x.std(axis=0) > 0, x.std(axis=0), 1.0)
    if y is not None:
        y = np.asarray(y, dtype=float)
        fitted.y_shift = float(y.mean())
        fitted.y_scale = float(y.std()) if y.std() > 0 else 1.0
    return fitted


def standardize_x(model: MlpModel, x: np.ndarray) -> np.ndarray:
    return (np.asarray(x, dtype=float) - model.x_shift) / model.x_scale


def standardize_x_var(model: MlpModel, x_var: np.ndarray) -> np.ndarray:
    return np.asarray(x_var, dtype=float) / model.x_scale ** 2


def standardize_y(model: MlpModel, y: np.ndarray) -> np.ndarray:
    return (np.asarray(y, dtype=float) - model.y_shift) / model.y_scale


def regression_outputs(model: MlpModel, out: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(b_hat, variance) in target units from heteroscedastic raw outputs."""
    out = np.asarray(out, dtype=float)
    b_hat = model.y_shift + model.y_scale * out[..., 0]
    return b_hat, np.exp(out[..., 1]) * model.y_scale ** 2


def save_model(model: MlpModel, path: str) -> str:
    """JSON checkpoint: sizes, flattened weights/biases, standardization, training config."""
    payload = {
        "layer_sizes": list(model.layer_sizes),
        "head": model.head,
        "dropout_rate": model.dropout_rate,
        "weights": [w.ravel().tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "x_shift": model.x_shift.tolist(),
        "x_scale": model.x_scale.tolist(),
        "y_shift": model.y_shift,
        "y_scale": model.y_scale,
        "training": model.training,
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f)
    return path


def load_model(path: str) -> MlpModel:
    if not os.path.exists(path):
        raise MissingArtifactError(path, "train the model first")
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    sizes = data["layer_sizes"]
    weights = [np.asarray(w, dtype=float).reshape(n_out, n_in)
               for w, n_in, n_out in zip(data["weights"], sizes[:-1], sizes[1:])]
    return MlpModel(
        layer_sizes=sizes,
        weights=weights,
        biases=[np.asarray(b, dtype=float) for b in data["biases"]],
        dropout_rate=data["dropout_rate"],
        head=data["head"],
        x_shift=np.asarray(data["x_shift"], dtype=float),
        x_scale=np.asarray(data["x_scale"], dtype=float),
        y_shift=data["y_shift"],
        y_scale=data["y_scale"],
        training=data.get("training", {}),
    )


__all__ = [
    'HEADS',
    'MlpModel',
    'GaussianActivation',
    'Gradients',
    'init_model',
    'dropout_masks',
    'forward',
    'forward_dropout',
    'relu_moments',
    'forward_adf',
    'softmax',
    'log_softmax',
    'loss_nll',
    'loss_distribution',
    'loss_logit_gaussian',
    'head_loss',
    'backward',
    'train',
    'fit_standardization',
    'standardize_x',
    'standardize_x_var',
    'standardize_y',
    'regression_outputs',
    'save_model',
    'load_model',
]
