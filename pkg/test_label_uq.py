"""Vote-derived labels, KL training loss, calibration metrics and synthetic corpora."""
import itertools
import math

import numpy as np
import pytest
from scipy.stats import multinomial

from uqbench.tools.label_uq import (
    VoteCorpus,
    VoteLabel,
    default_confusion,
    ece,
    kl_gradient,
    kl_loss,
    load_corpus,
    load_feature_csv,
    majority_vote,
    one_hot,
    save_corpus,
    synth_ambiguous_corpus,
    synth_votes,
    to_distributional,
    train_classifier,
)
from uqbench.tools.utils import tinynet
from uqbench.tools.utils.bench_config import ClassificationSettings
from uqbench.tools.utils.errors import ParameterError, ShapeError


def test_distributional_labels():
    label = VoteLabel(np.eye(17, dtype=int)[2] * 10)
    assert label.total == 10
    assert np.array_equal(to_distributional(label), np.eye(17)[2])
    counts = np.zeros(17, dtype=int)
    counts[:2] = 5
    assert to_distributional(counts)[:3].tolist() == [0.5, 0.5, 0.0]
    with pytest.raises(ParameterError):
        to_distributional(np.zeros(17))
    with pytest.raises(ParameterError):
        VoteLabel(np.array([-1, 2]))


def test_majority_vote_ties_go_to_lowest_index():
    counts = np.zeros(17, dtype=int)
    counts[:3] = [4, 3, 3]
    assert majority_vote(counts) == 0
    assert majority_vote(np.array([[0, 5, 5], [1, 1, 8]])).tolist() == [1, 2]


def test_kl_values():
    p = np.array([[0.2, 0.5, 0.3]])
    assert kl_loss(p, p) == pytest.approx(0.0, abs=1e-12)
    y = one_hot([1], 3)
    assert kl_loss(y, p) == pytest.approx(-math.log(0.5))
    uniform = np.full((1, 17), 1 / 17)
    assert kl_loss(one_hot([4], 17), uniform) == pytest.approx(math.log(17), abs=1e-9)
    assert math.log(17) == pytest.approx(2.833, abs=1e-3)


def test_kl_is_non_negative_on_random_pairs():
    rng = np.random.default_rng(21)
    for _ in range(200):
        y = rng.dirichlet(np.full(17, 0.3))
        p = rng.dirichlet(np.ones(17))
        assert kl_loss(y, p) >= -1e-12
    batch_y = rng.dirichlet(np.ones(5), size=50)
    batch_p = rng.dirichlet(np.ones(5), size=50)
    assert kl_loss(batch_y, batch_p) >= 0.0


def test_kl_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    y = rng.dirichlet(np.ones(5))
    logits = rng.normal(size=5)
    eps = 1e-6
    numeric = np.array([
        (kl_loss(y, tinynet.softmax(logits + eps * e)) - kl_loss(y, tinynet.softmax(logits - eps * e))) / (2 * eps)
        for e in np.eye(5)
    ])
    assert np.allclose(kl_gradient(y, logits), numeric, atol=1e-7)


def test_ece_single_bin_cases():
    probs = np.tile([1.0, 0.0], (4, 1))
    assert ece(probs, [0, 0, 0, 0]).ece == 0.0
    report = ece(probs, [0, 1, 0, 1])
    assert report.ece == pytest.approx(0.5)
    assert report.n_samples == 4
    assert sum(1 for b in report.bins if b.count) == 1


def test_empty_bins_contribute_nothing():
    probs = np.array([[0.95, 0.05], [0.55, 0.45]])
    report = ece(probs, [0, 1], n_bins=10)
    expected = 0.5 * abs(1.0 - 0.95) + 0.5 * abs(0.0 - 0.55)
    assert report.ece == pytest.approx(expected)
    assert all(b.accuracy == 0 and b.mean_confidence == 0 for b in report.bins if b.count == 0)


def test_calibrated_sampler_has_small_ece():
    rng = np.random.default_rng(1)
    conf = rng.uniform(0.5, 1.0, size=200_000)
    probs = np.column_stack([conf, 1 - conf])
    labels = np.where(rng.random(conf.size) < conf, 0, 1)
    assert ece(probs, labels).ece < 0.01


def test_ece_ignores_prediction_order():
    rng = np.random.default_rng(22)
    probs = rng.dirichlet(np.ones(4), size=500)
    labels = rng.integers(0, 4, size=500)
    order = rng.permutation(500)
    base = ece(probs, labels)
    shuffled = ece(probs[order], labels[order])
    assert shuffled.ece == pytest.approx(base.ece, abs=1e-12)
    assert [b.count for b in shuffled.bins] == [b.count for b in base.bins]


def test_ece_input_validation():
    with pytest.raises(ShapeError):
        ece(np.ones((3, 2)) / 2, [0, 1])
    with pytest.raises(ParameterError):
        ece(np.ones((3, 2)) / 2, [0, 1, 0], n_bins=0)


def test_identity_confusion_gives_one_hot_votes():
    corpus = synth_votes(5, 200, np.eye(5), 10, seed=3)
    assert np.array_equal(corpus.counts, 10 * np.eye(5, dtype=int)[corpus.true_class])
    assert np.array_equal(corpus.labels("one_hot"), corpus.labels("distributional"))


def test_uniform_confusion_counts():
    corpus = synth_votes(4, 20_000, np.full((4, 4), 0.25), 10, seed=4)
    assert np.allclose(corpus.counts.mean(axis=0), 2.5, atol=0.05)


def test_bad_confusion_rejected():
    with pytest.raises(ParameterError):
        synth_votes(3, 10, np.full((3, 3), 0.5), 10)
    with pytest.raises(ParameterError):
        default_confusion(3, 1.5)


def test_majority_vote_beats_single_vote():
    confusion = default_confusion(3, 0.85)
    accuracy = 0.0
    for truth in range(3):
        for counts in itertools.product(range(11), repeat=3):
            if sum(counts) != 10:
                continue
            if int(np.argmax(counts)) == truth:
                accuracy += multinomial.pmf(counts, 10, confusion[truth]) / 3
    assert accuracy > 0.85


def test_ambiguous_corpus_shapes_and_determinism():
    corpus = synth_ambiguous_corpus(k_classes=6, n_items=300, feature_dim=4, m_votes=10, seed=5)
    assert corpus.counts.shape == (300, 6)
    assert np.all(corpus.counts.sum(axis=1) == 10)
    assert corpus.features.shape == (300, 4)
    assert corpus.holdout_vote.shape == (300,)
    again = synth_ambiguous_corpus(k_classes=6, n_items=300, feature_dim=4, m_votes=10, seed=5)
    assert np.array_equal(corpus.counts, again.counts)
    assert np.array_equal(corpus.features, again.features)
    clear = synth_ambiguous_corpus(k_classes=6, n_items=100, feature_dim=4, diagonal=1.0, seed=5)
    assert np.all(clear.counts.max(axis=1) == 10)


def test_train_classifier_metrics_are_fractions():
    corpus = synth_ambiguous_corpus(k_classes=5, n_items=400, feature_dim=4, seed=6)
    settings = ClassificationSettings(k_classes=5, n_items=400, feature_dim=4, epochs=5, hidden=[8])
    for encoding in ("one_hot", "distributional"):
        result = train_classifier(corpus, encoding, settings, seed=6)
        for key in ("ece", "oa", "waa"):
            assert 0.0 <= result.metrics[key] <= 1.0
        assert result.calibration.n_samples == 120
    with pytest.raises(ParameterError):
        train_classifier(corpus, "soft", settings)


def test_corpus_round_trip(tmp_path):
    corpus = synth_ambiguous_corpus(k_classes=4, n_items=50, feature_dim=3, seed=7)
    paths = save_corpus(corpus, str(tmp_path))
    with open(paths["votes"], "r", encoding="utf-8") as f:
        assert f.readline().strip() == "item_id,true_class,c1,c2,c3,c4"
    loaded = load_corpus(str(tmp_path))
    assert np.array_equal(loaded.counts, corpus.counts)
    assert np.array_equal(loaded.holdout_vote, corpus.holdout_vote)
    assert np.allclose(loaded.features, corpus.features, rtol=1e-9)


def test_feature_rows_must_cover_every_item(tmp_path):
    corpus = synth_ambiguous_corpus(k_classes=4, n_items=20, feature_dim=3, seed=8)
    paths = save_corpus(corpus.subset(np.arange(10)), str(tmp_path))
    votes_only = VoteCorpus(corpus.counts, corpus.true_class)
    with pytest.raises(ShapeError):
        load_feature_csv(paths["features"], votes_only)
