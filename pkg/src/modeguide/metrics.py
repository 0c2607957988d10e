"""Diversity, representativeness, coverage, fidelity and downstream accuracy.

All distances are Euclidean in the native data space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist
from scipy.special import log_softmax
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_int, check_points, check_real
from .distill import TEST_STREAM, derive_seed, _as_run_seed
from .exceptions import MetricError, TrainingError

DEFAULT_K_NEAREST = 50
DEFAULT_COVERAGE_SIGMAS = 4.0


def diversity_scores(X):
    """Distance from each sample to its nearest other sample of the same class."""
    X = check_points(X)
    if X.shape[0] < 2:
        raise MetricError("diversity needs at least 2 samples in the class")
    d = cdist(X, X)
    np.fill_diagonal(d, np.inf)
    return d.min(axis=1)


def representativeness_scores(X, reference, k_nearest=DEFAULT_K_NEAREST):
    """Mean distance from each sample to its ``k_nearest`` closest reference points.

    Smaller means more representative.
    """
    X = check_points(X)
    reference = check_points(reference, name="reference")
    k = check_int(k_nearest, "k_nearest", minimum=1)
    if reference.shape[0] < k:
        raise MetricError(
            f"reference has {reference.shape[0]} points; need at least k_nearest={k}"
        )
    dist, _ = cKDTree(reference).query(X, k=k)
    return np.asarray(dist, dtype=np.float64).reshape(X.shape[0], k).mean(axis=1)


def representativeness_scale(reference, k_nearest=DEFAULT_K_NEAREST, q=95.0):
    """Normaliser for representativeness: the ``q``-th percentile of the
    reference points' own mean distance to their ``k_nearest`` neighbours
    (self excluded)."""
    reference = check_points(reference, name="reference")
    k = check_int(k_nearest, "k_nearest", minimum=1)
    if reference.shape[0] < k + 1:
        raise MetricError(
            f"reference has {reference.shape[0]} points; need at least {k + 1}"
        )
    dist, _ = cKDTree(reference).query(reference, k=k + 1)
    return float(np.percentile(dist[:, 1:].mean(axis=1), q))


def normalized_representativeness(distances, scale):
    """``1 - distance / scale`` clipped to [0, 1]; larger is more representative."""
    return np.clip(1.0 - np.asarray(distances) / scale, 0.0, 1.0)


def mode_coverage(X, modes, r):
    """Fraction of ``modes`` with at least one sample within distance ``r``."""
    r = check_real(r, "r", low=0.0, low_open=True)
    modes = check_points(modes, name="modes")
    X = check_points(X, allow_empty=True)
    if X.shape[0] == 0:
        return 0.0
    return float((cdist(modes, X).min(axis=1) <= r).mean())


def default_coverage_radius(model, cls):
    return DEFAULT_COVERAGE_SIGMAS * float(np.sqrt(model.mixture(cls).variances.max()))


def fidelity_loglik(X, y, model):
    """Mean class-conditional log-likelihood of labelled samples."""
    X = check_points(X)
    y = np.asarray(y).reshape(-1)
    total = 0.0
    for c in np.unique(y):
        total += float(np.sum(model.log_likelihood(c.item(), X[y == c])))
    return total / X.shape[0]


class SoftmaxRegression(ClassifierMixin, BaseEstimator):
    """Multinomial logistic regression by full-batch gradient descent.

    Inputs are centred on the training mean and divided by one scalar,
    the root-mean-square distance to that mean. A single scale keeps the
    geometry of the data (a per-feature scale would inflate pure-noise
    coordinates) while keeping the step size stable for any data range.
    Weights start at zero, so training is deterministic.

    Parameters
    ----------
    epochs : int
    learning_rate : float
    """

    def __init__(self, epochs=500, learning_rate=0.1):
        self.epochs = epochs
        self.learning_rate = learning_rate

    def fit(self, X, y):
        X = check_points(X)
        y = np.asarray(y).reshape(-1)
        self.classes_, idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise TrainingError("need samples from at least 2 classes")
        epochs = check_int(self.epochs, "epochs", minimum=1)
        lr = check_real(self.learning_rate, "learning_rate", low=0.0, low_open=True)
        self.mean_ = X.mean(axis=0)
        rms = float(np.sqrt(((X - self.mean_) ** 2).sum(axis=1).mean()))
        self.scale_ = rms if rms > 0 else 1.0
        Z = (X - self.mean_) / self.scale_
        n, d = Z.shape
        k = len(self.classes_)
        onehot = np.eye(k)[idx]
        W = np.zeros((d, k))
        b = np.zeros(k)
        losses = []
        for _ in range(epochs):
            logp = log_softmax(Z @ W + b, axis=1)
            losses.append(float(-(onehot * logp).sum() / n))
            resid = (np.exp(logp) - onehot) / n
            W -= lr * (Z.T @ resid)
            b -= lr * resid.sum(axis=0)
        self.coef_ = W
        self.intercept_ = b
        self.loss_history_ = losses
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        Z = (check_points(X) - self.mean_) / self.scale_
        return Z @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        return np.exp(log_softmax(self.decision_function(X), axis=1))

    def predict(self, X):
        return self.classes_[self.decision_function(X).argmax(axis=1)]


def downstream_accuracy(X, y, model, test_count=500, repeats=20, rng=0,
                        epochs=500, learning_rate=0.1):
    """Train on ``(X, y)``, test on fresh model draws.

    The classifier is trained once; each repeat draws ``test_count`` test
    points per class with its own stream.

    Returns
    -------
    mean, std : float
    accuracies : ndarray of shape (repeats,)
    """
    test_count = check_int(test_count, "test_count", minimum=1)
    repeats = check_int(repeats, "repeats", minimum=1)
    clf = SoftmaxRegression(epochs, learning_rate).fit(X, y)
    seed = _as_run_seed(rng)
    accs = np.empty(repeats)
    for r in range(repeats):
        Xt, yt = [], []
        for pos, c in enumerate(model.classes):
            gen = np.random.default_rng(derive_seed(seed, TEST_STREAM, r, pos))
            Xt.append(model.sample_data(c, test_count, gen))
            yt.append(np.full(test_count, c))
        accs[r] = clf.score(np.concatenate(Xt), np.concatenate(yt))
    return float(accs.mean()), float(accs.std()), accs


@dataclass
class MetricsReport:
    """Metrics of one distilled set.

    ``per_class`` maps class id to a dict with keys ``n``, ``diversity``,
    ``representativeness``, ``representativeness_score``, ``coverage`` and
    ``fidelity`` (class means of the per-sample values).
    """

    method: str
    labels: np.ndarray
    diversity: np.ndarray
    representativeness: np.ndarray
    representativeness_score: np.ndarray
    per_class: dict
    fidelity: float
    accuracy_mean: float = float("nan")
    accuracy_std: float = float("nan")
    accuracies: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def coverage(self):
        return float(np.mean([row["coverage"] for row in self.per_class.values()]))

    COLUMNS = ("class", "method", "n", "diversity", "representativeness",
               "representativeness_score", "coverage", "fidelity",
               "accuracy_mean", "accuracy_std")

    def rows(self):
        """Per-class rows followed by an ``all`` summary row."""
        out = []
        for c, row in self.per_class.items():
            out.append([c, self.method, row["n"], row["diversity"],
                        row["representativeness"], row["representativeness_score"],
                        row["coverage"], row["fidelity"], "", ""])
        out.append(["all", self.method, len(self.labels), float(self.diversity.mean()),
                    float(self.representativeness.mean()),
                    float(self.representativeness_score.mean()),
                    self.coverage, self.fidelity, self.accuracy_mean, self.accuracy_std])
        return out

    def sample_rows(self):
        return [[int(c), self.method, float(d), float(r), float(s)]
                for c, d, r, s in zip(self.labels, self.diversity,
                                      self.representativeness,
                                      self.representativeness_score)]


def evaluate(distilled, model, reference_X, reference_y, method=None,
             k_nearest=DEFAULT_K_NEAREST, coverage_radius=None, test_count=500,
             repeats=20, rng=0, accuracy=True):
    """Compute a :class:`MetricsReport` for ``distilled``.

    ``reference_X``/``reference_y`` hold the original per-class data used
    for representativeness. ``coverage_radius=None`` uses four times the
    largest component standard deviation of each class.
    """
    if method is None:
        unguided = distilled.provenance.get("guidance", {}).get("lambda") == 0.0
        method = "baseline" if unguided else distilled.provenance.get("method", "unknown")
    ref_y = np.asarray(reference_y)
    div = np.empty(len(distilled))
    rep = np.empty(len(distilled))
    rep_score = np.empty(len(distilled))
    per_class = {}
    for c in distilled.classes:
        mask = distilled.y == c
        Xc = distilled.X[mask]
        ref = reference_X[ref_y == c]
        div[mask] = diversity_scores(Xc)
        rep[mask] = representativeness_scores(Xc, ref, k_nearest)
        rep_score[mask] = normalized_representativeness(
            rep[mask], representativeness_scale(ref, k_nearest))
        r = coverage_radius if coverage_radius is not None else default_coverage_radius(model, c)
        per_class[c] = {
            "n": int(mask.sum()),
            "diversity": float(div[mask].mean()),
            "representativeness": float(rep[mask].mean()),
            "representativeness_score": float(rep_score[mask].mean()),
            "coverage": mode_coverage(Xc, model.modes(c), r),
            "fidelity": fidelity_loglik(Xc, np.full(len(Xc), c), model),
        }
    report = MetricsReport(method, distilled.y.copy(), div, rep, rep_score, per_class,
                           fidelity_loglik(distilled.X, distilled.y, model))
    if accuracy:
        mean, std, accs = downstream_accuracy(distilled.X, distilled.y, model,
                                              test_count, repeats, rng)
        report.accuracy_mean, report.accuracy_std, report.accuracies = mean, std, accs
    return report


def diversity_table(reports):
    """Per-class mean diversity, one column per report (method)."""
    classes = sorted({c for rep in reports for c in rep.per_class})
    header = ["class"] + [rep.method for rep in reports]
    rows = [[c] + [rep.per_class[c]["diversity"] if c in rep.per_class else ""
                   for rep in reports] for c in classes]
    rows.append(["average"] + [float(np.mean([r["diversity"] for r in rep.per_class.values()]))
                               for rep in reports])
    return header, rows
