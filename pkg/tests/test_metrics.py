from __future__ import annotations

import math

import numpy as np
import pytest

from modeguide.data import make_planted_model
from modeguide.distill import DistilledSet
from modeguide.exceptions import MetricError, TrainingError
from modeguide.metrics import (SoftmaxRegression, default_coverage_radius, diversity_scores,
                               diversity_table, downstream_accuracy, evaluate,
                               fidelity_loglik, mode_coverage, normalized_representativeness,
                               representativeness_scale, representativeness_scores)
from modeguide.oracle import GmmClassModel, Mixture

from oracles import mixture_logpdf, pairwise_min_distance


def _pm10():
    return GmmClassModel({0: Mixture([1.0], [[-10.0, 0.0]], [1.0]),
                          1: Mixture([1.0], [[10.0, 0.0]], [1.0])})


# --- diversity ---------------------------------------------------------------------

def test_diversity_identical_pair():
    np.testing.assert_array_equal(diversity_scores([[1.0, 2.0], [1.0, 2.0]]), [0.0, 0.0])


def test_diversity_collinear():
    d = 2.5
    np.testing.assert_allclose(diversity_scores([[0.0], [d], [2 * d]]), [d, d, d])


def test_diversity_permutation_invariant(rng):
    X = rng.normal(size=(9, 3))
    perm = rng.permutation(9)
    np.testing.assert_allclose(np.sort(diversity_scores(X)), np.sort(diversity_scores(X[perm])))
    np.testing.assert_allclose(diversity_scores(X), pairwise_min_distance(X), rtol=1e-12)


def test_diversity_singleton_error():
    with pytest.raises(MetricError):
        diversity_scores([[0.0, 0.0]])


def test_duplicate_drives_pair_to_zero(rng):
    X = rng.normal(size=(6, 2))
    before = diversity_scores(X)
    after = diversity_scores(np.vstack([X, X[2]]))
    assert after[2] == 0.0 and after[-1] == 0.0
    assert np.all(after[:6] <= before)


# --- representativeness ----------------------------------------------------------------

def test_representativeness_exact_member():
    ref = np.array([[0.0, 1.0], [3.0, 4.0]])
    assert representativeness_scores([[3.0, 4.0]], ref, 1)[0] == 0.0


def test_representativeness_two_point_line():
    assert representativeness_scores([[0.0]], [[0.0], [1.0]], 2)[0] == pytest.approx(0.5)


def test_representativeness_reference_too_small():
    with pytest.raises(MetricError, match="k_nearest=3"):
        representativeness_scores([[0.0]], [[0.0], [1.0]], 3)


def test_representativeness_brute_force(rng):
    X, ref = rng.normal(size=(5, 2)), rng.normal(size=(80, 2))
    got = representativeness_scores(X, ref, 50)
    for x, v in zip(X, got):
        dists = sorted(math.dist(x, r) for r in ref)[:50]
        assert v == pytest.approx(sum(dists) / 50, rel=1e-12)


def test_representativeness_permutation_invariant(rng):
    X, ref = rng.normal(size=(7, 2)), rng.normal(size=(60, 2))
    perm = rng.permutation(7)
    np.testing.assert_allclose(representativeness_scores(X, ref, 10)[perm],
                               representativeness_scores(X[perm], ref, 10))


def test_normalized_representativeness():
    ref = np.arange(11, dtype=float)[:, None]
    scale = representativeness_scale(ref, 2, q=100.0)
    assert scale == pytest.approx(1.5)  # end points: neighbours at 1 and 2
    out = normalized_representativeness(np.array([0.0, 0.75, 3.0]), scale)
    np.testing.assert_allclose(out, [1.0, 0.5, 0.0])


# --- coverage ----------------------------------------------------------------------------

def test_coverage_all_centres():
    modes = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    assert mode_coverage(modes, modes, 0.1) == 1.0


def test_coverage_none_within_radius():
    assert mode_coverage([[100.0, 100.0]], [[0.0, 0.0], [1.0, 1.0]], 2.0) == 0.0


def test_coverage_half():
    modes = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]])
    X = np.array([[0.1, 0.0], [10.0, 0.2], [5.0, 5.0]])
    assert mode_coverage(X, modes, 1.0) == 0.5


def test_coverage_radius_must_be_positive():
    with pytest.raises(ValueError):
        mode_coverage([[0.0]], [[0.0]], 0.0)


def test_coverage_monotone_in_radius(rng):
    X, modes = rng.normal(scale=5, size=(10, 2)), rng.normal(scale=5, size=(6, 2))
    vals = [mode_coverage(X, modes, r) for r in np.linspace(0.01, 20, 50)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_default_coverage_radius(planted):
    assert default_coverage_radius(planted, 0) == 4.0


# --- downstream accuracy ------------------------------------------------------------------

def test_accuracy_separable_pm10():
    model = _pm10()
    X = np.vstack([model.sample_data(0, 8, 1), model.sample_data(1, 8, 2)])
    y = np.repeat([0, 1], 8)
    mean, std, accs = downstream_accuracy(X, y, model, test_count=500, repeats=5, rng=0)
    assert mean == 1.0 and std == 0.0 and len(accs) == 5


def test_accuracy_shuffled_labels_chance():
    model = _pm10()
    X = np.vstack([model.sample_data(0, 8, 1), model.sample_data(1, 8, 2)])
    y = np.repeat([0, 1], 8)
    gen = np.random.default_rng(0)
    means = [downstream_accuracy(X, gen.permutation(y), model, 200, 1, rng=s)[0]
             for s in range(60)]
    se = np.std(means, ddof=1) / np.sqrt(len(means))
    assert abs(np.mean(means) - 0.5) <= 5 * se


def test_accuracy_deterministic(planted):
    X = np.vstack([planted.sample_data(c, 8, c) for c in planted.classes])
    y = np.repeat(planted.classes, 8)
    a = downstream_accuracy(X, y, planted, 100, 3, rng=4)
    b = downstream_accuracy(X, y, planted, 100, 3, rng=4)
    assert a[0] == b[0] and a[1] == b[1]


def test_accuracy_single_class_error(planted):
    with pytest.raises(TrainingError):
        downstream_accuracy(np.zeros((3, 2)), [0, 0, 0], planted)


def test_classifier_fits_separable_training_set():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(loc=c, size=(20, 2)) for c in ([0, 0], [6, 0], [0, 6])])
    y = np.repeat([0, 1, 2], 20)
    clf = SoftmaxRegression().fit(X, y)
    assert clf.score(X, y) == 1.0
    assert all(b <= a + 1e-12 for a, b in zip(clf.loss_history_, clf.loss_history_[1:]))
    np.testing.assert_allclose(clf.predict_proba(X).sum(axis=1), 1.0)
    assert clf.get_params() == {"epochs": 500, "learning_rate": 0.1}


# --- fidelity ----------------------------------------------------------------------------

def test_fidelity_max_at_means():
    model = GmmClassModel({0: Mixture([1.0], [[0.0, 0.0]], [1.0]),
                           1: Mixture([1.0], [[5.0, 5.0]], [1.0])})
    X = np.array([[0.0, 0.0], [5.0, 5.0]])
    assert fidelity_loglik(X, [0, 1], model) == pytest.approx(-math.log(2 * math.pi))
    assert fidelity_loglik(X + 5.0, [0, 1], model) < fidelity_loglik(X, [0, 1], model)


def test_fidelity_brute_force(planted):
    X = np.array([[1.0, 2.0], [-30.0, 4.0], [12.0, -7.0]])
    y = [0, 1, 0]
    ref = sum(mixture_logpdf(planted.mixture(c).weights, planted.mixture(c).means,
                             planted.mixture(c).variances, x) for x, c in zip(X, y)) / 3
    assert fidelity_loglik(X, y, planted) == pytest.approx(ref, rel=1e-12)


# --- report --------------------------------------------------------------------------------

def _ds(model, ipc=4):
    X = np.vstack([model.modes(c)[:ipc] + 0.1 for c in model.classes])
    y = np.repeat(model.classes, ipc)
    return DistilledSet(X, y, np.tile(np.arange(ipc), len(model.classes)),
                        np.zeros(len(y), dtype=np.uint64), ipc,
                        {"guidance": {"lambda": 0.1}, "method": "kmeans-centroid"})


def test_evaluate_report(planted):
    ds = _ds(planted)
    ref_X = np.vstack([planted.sample_data(c, 100, c) for c in planted.classes])
    ref_y = np.repeat(planted.classes, 100)
    rep = evaluate(ds, planted, ref_X, ref_y, test_count=50, repeats=2, rng=0)
    assert rep.method == "kmeans-centroid"
    assert rep.per_class[0]["coverage"] == 0.5
    assert np.all(rep.diversity >= 0) and np.all(rep.representativeness >= 0)
    assert 0 <= rep.accuracy_mean <= 1
    rows = rep.rows()
    assert rows[-1][0] == "all" and len(rows) == 3
    header, table = diversity_table([rep])
    assert header == ["class", "kmeans-centroid"] and table[-1][0] == "average"


def test_evaluate_labels_baseline(planted):
    ds = _ds(planted)
    ds.provenance = {"guidance": {"lambda": 0.0}, "method": "kmeans-centroid"}
    ref_X = np.vstack([planted.sample_data(c, 60, c) for c in planted.classes])
    rep = evaluate(ds, planted, ref_X, np.repeat(planted.classes, 60), accuracy=False)
    assert rep.method == "baseline" and math.isnan(rep.accuracy_mean)


def test_planted_classifier_sanity():
    model = make_planted_model(2, 1, 10.0)
    X = np.vstack([model.modes(c) for c in model.classes])
    assert downstream_accuracy(X, model.classes, model, 100, 1)[0] == 1.0
