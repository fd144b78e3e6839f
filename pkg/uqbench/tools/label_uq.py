"""Classification track: distributional labels, KL training, calibration.

Flow of one study seed:

    1. synthesize an ambiguous vote corpus (M votes + 1 held-out vote per item)
    2. split items 70/30
    3. train one softmax classifier per label encoding
       - one_hot:        majority vote, cross-entropy
       - distributional: counts / M, KL divergence
    4. score on the test items: CE vs both encodings, OA, WAA and ECE

Class indices are 0-based; column ``c1`` of a vote CSV holds class 0.
Majority-vote ties go to the lowest class index.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .utils import tinynet
from .utils.artifacts import read_csv, read_json, write_csv, write_json
from .utils.bench_config import ClassificationSettings
from .utils.errors import ParameterError, ShapeError
from .utils.randkit import SeedBundle, SeedLike, as_generator
from .utils.table_schema import TABLE6_COLUMNS, assert_columns, feature_columns, vote_columns

logger = logging.getLogger(__name__)

ENCODINGS = ("one_hot", "distributional")
VOTES_CSV = "votes.csv"
FEATURES_CSV = "features.csv"
CORPUS_META = "corpus.json"


@dataclass
class VoteLabel:
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(self.counts < 0):
            raise ParameterError("Vote counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def k_classes(self) -> int:
        return len(self.counts)


@dataclass
class CalibrationBin:
    lower: float
    upper: float
    mean_confidence: float
    accuracy: float
    count: int


@dataclass
class CalibrationReport:
    bins: List[CalibrationBin]
    ece: float

    @property
    def n_samples(self) -> int:
        return sum(b.count for b in self.bins)

    def to_dict(self) -> Dict:
        return {"ece": self.ece, "bins": [vars(b) for b in self.bins]}


@dataclass
class VoteCorpus:
    counts: np.ndarray                          # (n, K) int
    true_class: np.ndarray                      # (n,)
    features: Optional[np.ndarray] = None       # (n, D)
    holdout_vote: Optional[np.ndarray] = None   # (n,)
    item_id: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.item_id is None:
            self.item_id = np.arange(len(self.counts))

    def __len__(self) -> int:
        return len(self.counts)

    @property
    def k_classes(self) -> int:
        return self.counts.shape[1]

    def subset(self, idx: np.ndarray) -> "VoteCorpus":
        pick = lambda a: None if a is None else a[idx]
        return VoteCorpus(self.counts[idx], self.true_class[idx], pick(self.features),
                          pick(self.holdout_vote), self.item_id[idx])

    def labels(self, encoding: str) -> np.ndarray:
        if encoding == "one_hot":
            return one_hot(majority_vote(self.counts), self.k_classes)
        if encoding == "distributional":
            return to_distributional(self.counts)
        raise ParameterError(f"Unknown encoding '{encoding}'")

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.counts, columns=list(vote_columns(self.k_classes))[2:])
        frame.insert(0, "true_class", self.true_class)
        frame.insert(0, "item_id", self.item_id)
        return frame


def to_distributional(votes) -> np.ndarray:
    """counts / M for a VoteLabel, a count vector or an (n, K) count matrix."""
    counts = np.asarray(votes.counts if isinstance(votes, VoteLabel) else votes, dtype=float)
    totals = counts.sum(axis=-1, keepdims=True)
    if np.any(totals <= 0):
        raise ParameterError("Distributional label needs at least one vote")
    return counts / totals


def majority_vote(counts) -> np.ndarray:
    """Index of the most-voted class; ties go to the lowest index."""
    return np.argmax(np.asarray(counts), axis=-1)


def one_hot(index, k_classes: int) -> np.ndarray:
    return np.eye(k_classes)[np.asarray(index, dtype=int)]


def kl_loss(y_distr, p) -> float:
    """KL(y_distr || p) with 0 log 0 = 0; mean over rows for a batch."""
    y = np.asarray(y_distr, dtype=float)
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(y > 0, y * (np.log(np.where(y > 0, y, 1.0)) - np.log(p)), 0.0)
    return float(np.mean(np.sum(terms, axis=-1)))


def kl_gradient(y_distr, logits) -> np.ndarray:
    """Gradient of KL(y || softmax(logits)) w.r.t. the logits of one item."""
    return tinynet.softmax(logits) - np.asarray(y_distr, dtype=float)


def cross_entropy(y_target, p) -> float:
    y = np.asarray(y_target, dtype=float)
    return float(np.mean(-np.sum(y * np.log(np.maximum(p, 1e-300)), axis=-1)))


def ece(probabilities, labels, n_bins: int = 10) -> CalibrationReport:
    """Expected calibration error over equal-width confidence bins on (0, 1]."""
    probs = np.asarray(probabilities, dtype=float)
    labels = np.asarray(labels)
    if probs.ndim != 2 or len(probs) == 0:
        raise ParameterError("ECE needs a non-empty (n, K) probability array")
    if n_bins < 1:
        raise ParameterError(f"n_bins must be >= 1, got {n_bins}")
    if len(labels) != len(probs):
        raise ShapeError(f"{len(labels)} labels for {len(probs)} predictions")
    confidences = probs.max(axis=1)
    correct = (probs.argmax(axis=1) == labels).astype(float)
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    n = len(probs)
    bins, total = [], 0.0
    for lower, upper in zip(edges[:-1], edges[1:]):
        in_bin = (confidences > lower) & (confidences <= upper)
        count = int(in_bin.sum())
        if count:
            acc = float(correct[in_bin].mean())
            conf = float(confidences[in_bin].mean())
            total += count / n * abs(acc - conf)
        else:
            acc = conf = 0.0
        bins.append(CalibrationBin(float(lower), float(upper), conf, acc, count))
    return CalibrationReport(bins, float(total))


def default_confusion(k_classes: int = 17, diagonal: float = 0.85) -> np.ndarray:
    """diagonal on the diagonal, the rest spread uniformly off it."""
    if not 0 <= diagonal <= 1:
        raise ParameterError(f"Diagonal must be in [0, 1], got {diagonal}")
    off = (1.0 - diagonal) / (k_classes - 1) if k_classes > 1 else 0.0
    confusion = np.full((k_classes, k_classes), off)
    np.fill_diagonal(confusion, diagonal)
    return confusion


def _check_confusion(confusion: np.ndarray, k_classes: int) -> np.ndarray:
    confusion = np.asarray(confusion, dtype=float)
    if confusion.shape != (k_classes, k_classes):
        raise ParameterError(f"Confusion must be {k_classes}x{k_classes}, got {confusion.shape}")
    if np.any(confusion < 0) or not np.allclose(confusion.sum(axis=1), 1.0, atol=1e-9):
        raise ParameterError("Confusion rows must be non-negative and sum to 1")
    return confusion


def synth_votes(k_classes: int, n_items: int, confusion: np.ndarray, m_votes: int,
                seed: SeedLike = 7) -> VoteCorpus:
    """M i.i.d. votes per item from the confusion row of its true class."""
    confusion = _check_confusion(confusion, k_classes)
    if m_votes < 1:
        raise ParameterError(f"Need M >= 1 votes, got {m_votes}")
    rng = as_generator(seed, "votes")
    truth = rng.integers(0, k_classes, size=n_items)
    counts = rng.multinomial(m_votes, confusion[truth])
    return VoteCorpus(counts.astype(np.int64), truth)


def synth_ambiguous_corpus(k_classes: int = 17, n_items: int = 3000, feature_dim: int = 8,
                           m_votes: int = 10, diagonal: float = 0.85, seed: SeedLike = 7,
                           concentration: float = 2.0, class_spread: float = 3.0,
                           feature_noise: float = 1.0) -> VoteCorpus:
    """Corpus whose vote ambiguity is mirrored in the features.

    Each item mixes its true class c with a confuser c' drawn from the
    off-diagonal of the confusion row, with weight w ~ Beta of mean
    1 - diagonal. Votes (M plus one held out) come from
    (1 - w) e_c + w e_c'; features sit at (1 - w) mu_c + w mu_c' plus noise.
    """
    if m_votes < 1:
        raise ParameterError(f"Need M >= 1 votes, got {m_votes}")
    bundle = seed if isinstance(seed, SeedBundle) else SeedBundle(int(seed))
    confusion = default_confusion(k_classes, diagonal)
    rng = bundle.rng("votes")
    truth = rng.integers(0, k_classes, size=n_items)
    off = confusion[truth].copy()
    off[np.arange(n_items), truth] = 0.0
    off_mass = off.sum(axis=1, keepdims=True)
    if k_classes > 1 and diagonal < 1:
        off /= off_mass
        confuser = np.array([rng.choice(k_classes, p=row) for row in off])
        mean_w = 1.0 - diagonal
        weight = rng.beta(mean_w * concentration, (1.0 - mean_w) * concentration, size=n_items)
    else:
        confuser = truth.copy()
        weight = np.zeros(n_items)
    pi = (1.0 - weight)[:, None] * one_hot(truth, k_classes) + weight[:, None] * one_hot(confuser, k_classes)
    pi /= pi.sum(axis=1, keepdims=True)
    counts = rng.multinomial(m_votes, pi)
    holdout = np.array([rng.choice(k_classes, p=row) for row in pi])

    feature_rng = bundle.rng("features")
    means = class_spread * feature_rng.standard_normal((k_classes, feature_dim))
    centers = (1.0 - weight)[:, None] * means[truth] + weight[:, None] * means[confuser]
    features = centers + feature_noise * feature_rng.standard_normal((n_items, feature_dim))
    return VoteCorpus(counts.astype(np.int64), truth, features, holdout)


@dataclass
class ClassifierResult:
    model: tinynet.MlpModel
    calibration: CalibrationReport
    metrics: Dict[str, float] = field(default_factory=dict)


def split_items(n_items: int, test_fraction: float, seed: SeedLike) -> Tuple[np.ndarray, np.ndarray]:
    order = as_generator(seed, "split").permutation(n_items)
    n_test = int(round(test_fraction * n_items))
    return np.sort(order[n_test:]), np.sort(order[:n_test])


def score_classifier(model: tinynet.MlpModel, test: VoteCorpus, n_bins: int = 10) -> Tuple[Dict[str, float], CalibrationReport]:
    probs = tinynet.softmax(tinynet.forward(model, tinynet.standardize_x(model, test.features)))
    distr = to_distributional(test.counts)
    majority = majority_vote(test.counts)
    pred = probs.argmax(axis=1)
    reference = test.holdout_vote if test.holdout_vote is not None else majority
    calibration = ece(probs, reference, n_bins)
    metrics = {
        "ce_one_hot": cross_entropy(one_hot(majority, test.k_classes), probs),
        "ce_distr": cross_entropy(distr, probs),
        "ece": calibration.ece,
        "oa": float(np.mean(pred == majority)),
        "waa": float(np.mean(distr[np.arange(len(pred)), pred])),
    }
    return metrics, calibration


def train_classifier(corpus: VoteCorpus, encoding: str, settings: Optional[ClassificationSettings] = None,
                     seed: SeedLike = 7) -> ClassifierResult:
    """Softmax MLP trained on one label encoding; scored on the held-out split."""
    if encoding not in ENCODINGS:
        raise ParameterError(f"Unknown encoding '{encoding}'; expected one of {ENCODINGS}")
    if corpus.features is None:
        raise ShapeError("Corpus has no feature vectors")
    settings = settings or ClassificationSettings()
    bundle = seed if isinstance(seed, SeedBundle) else SeedBundle(int(seed))
    train_idx, test_idx = split_items(len(corpus), settings.test_fraction, bundle)
    train, test = corpus.subset(train_idx), corpus.subset(test_idx)
    sizes = [corpus.features.shape[1]] + list(settings.hidden) + [corpus.k_classes]
    net_seed = bundle.child(f"classifier.{encoding}")
    model = tinynet.init_model(sizes, dropout_rate=0.0, head="softmax", seed=net_seed)
    model = tinynet.fit_standardization(model, train.features)
    trained = tinynet.train(model, tinynet.standardize_x(model, train.features), train.labels(encoding),
                            epochs=settings.epochs, batch=64, step_size=0.05, momentum=0.9, seed=net_seed)
    metrics, calibration = score_classifier(trained, test, settings.ece_bins)
    logger.info(f"✅ {encoding}: ECE={metrics['ece']:.4f} OA={metrics['oa']:.4f}")
    return ClassifierResult(trained, calibration, metrics)


def run_classification_study(settings: Optional[ClassificationSettings] = None,
                             seed: SeedLike = 7) -> Tuple[pd.DataFrame, Dict[str, CalibrationReport]]:
    """One row per (encoding, seed); returns the table and the last seed's calibration reports."""
    settings = settings or ClassificationSettings()
    bundle = seed if isinstance(seed, SeedBundle) else SeedBundle(int(seed))
    rows, reports = [], {}
    for run_seed in settings.seeds:
        run = bundle.child(f"seed.{run_seed}")
        corpus = synth_ambiguous_corpus(settings.k_classes, settings.n_items, settings.feature_dim,
                                        settings.votes, settings.diagonal, run)
        for encoding in ENCODINGS:
            result = train_classifier(corpus, encoding, settings, run)
            rows.append(dict(encoding=encoding, seed=run_seed, **result.metrics))
            reports[encoding] = result.calibration
    return pd.DataFrame(rows, columns=list(TABLE6_COLUMNS)), reports


def save_corpus(corpus: VoteCorpus, directory: str) -> Dict[str, str]:
    paths = {"votes": write_csv(corpus.to_frame(), os.path.join(directory, VOTES_CSV))}
    if corpus.features is not None:
        frame = pd.DataFrame(corpus.features, columns=list(feature_columns(corpus.features.shape[1]))[1:])
        frame.insert(0, "item_id", corpus.item_id)
        paths["features"] = write_csv(frame, os.path.join(directory, FEATURES_CSV))
    meta = {"k_classes": corpus.k_classes, "n_items": len(corpus),
            "holdout_vote": None if corpus.holdout_vote is None else corpus.holdout_vote.tolist()}
    paths["metadata"] = write_json(meta, os.path.join(directory, CORPUS_META))
    return paths


def load_vote_csv(path: str) -> VoteCorpus:
    frame = read_csv(path)
    k = len(frame.columns) - 2
    assert_columns(frame, vote_columns(k), os.path.basename(path))
    return VoteCorpus(frame.iloc[:, 2:].to_numpy(np.int64), frame["true_class"].to_numpy(int),
                      item_id=frame["item_id"].to_numpy(int))


def load_feature_csv(path: str, corpus: VoteCorpus) -> VoteCorpus:
    """Attach externally supplied ``item_id,f1..fD`` features to a vote corpus by item_id."""
    frame = read_csv(path)
    assert_columns(frame, feature_columns(len(frame.columns) - 1), os.path.basename(path))
    indexed = frame.set_index("item_id")
    missing = sorted(set(corpus.item_id.tolist()) - set(indexed.index.tolist()))
    if missing:
        raise ShapeError(f"{len(missing)} items have no feature row (first: {missing[0]})")
    features = indexed.loc[corpus.item_id].to_numpy(float)
    return VoteCorpus(corpus.counts, corpus.true_class, features, corpus.holdout_vote, corpus.item_id)


def load_corpus(directory: str) -> VoteCorpus:
    corpus = load_vote_csv(os.path.join(directory, VOTES_CSV))
    if os.path.exists(os.path.join(directory, FEATURES_CSV)):
        corpus = load_feature_csv(os.path.join(directory, FEATURES_CSV), corpus)
    meta = read_json(os.path.join(directory, CORPUS_META))
    if meta.get("holdout_vote") is not None:
        corpus.holdout_vote = np.asarray(meta["holdout_vote"], dtype=int)
    return corpus


__all__ = [
    'ENCODINGS',
    'VoteLabel',
    'CalibrationBin',
    'CalibrationReport',
    'VoteCorpus',
    'ClassifierResult',
    'to_distributional',
    'majority_vote',
    'one_hot',
    'kl_loss',
    'kl_gradient',
    'cross_entropy',
    'ece',
    'default_confusion',
    'synth_votes',
    'synth_ambiguous_corpus',
    'split_items',
    'score_classifier',
    'train_classifier',
    'run_classification_study',
    'save_corpus',
    'load_vote_csv',
    'load_feature_csv',
    'load_corpus',
]
