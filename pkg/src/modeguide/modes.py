"""Mode discovery: estimate representative vectors for one class by clustering.

Each discovery method is a scikit-learn style estimator exposing ``modes_``
after ``fit``; the ``*_fit`` / ``*_modes`` functions wrap them and return a
:class:`ModeSet`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_int, check_points, check_random_state, check_real
from .exceptions import ConfigError, DiscoveryError

METHODS = ("kmeans-centroid", "kmeans-closest", "gmm", "dbscan", "random")
# CLI spelling -> method tag
METHOD_ALIASES = {
    "kmeans": "kmeans-centroid",
    "kmeans-centroid": "kmeans-centroid",
    "kmeans-closest": "kmeans-closest",
    "gmm": "gmm",
    "dbscan": "dbscan",
    "random": "random",
}


@dataclass(eq=False)
class ModeSet:
    """Discovered modes of one class."""

    cls: object
    modes: np.ndarray
    method: str

    def __post_init__(self):
        self.modes = np.atleast_2d(np.asarray(self.modes, dtype=np.float64))
        if self.modes.shape[0] < 1:
            raise DiscoveryError(f"class {self.cls!r}: no modes")
        if not np.all(np.isfinite(self.modes)):
            raise DiscoveryError(f"class {self.cls!r}: non-finite mode")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method tag {self.method!r}", field="method")

    @property
    def n_modes(self):
        return self.modes.shape[0]

    @property
    def dim(self):
        return self.modes.shape[1]

    def __len__(self):
        return self.n_modes

    def __eq__(self, other):
        return (isinstance(other, ModeSet) and self.cls == other.cls
                and self.method == other.method
                and np.array_equal(self.modes, other.modes))


def _sq_dists(X, C):
    # exact pairwise squared distances; no expansion trick so that
    # identical points give exactly zero
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=-1)


def _check_k(X, k):
    k = check_int(k, "k", minimum=1)
    distinct = np.unique(X, axis=0).shape[0]
    if k > distinct:
        raise ConfigError(
            f"cannot find {k} modes among {distinct} distinct points", field="k"
        )
    return k


def kmeans_plusplus(X, k, rng):
    """D^2-weighted seeding; returns indices of the chosen points."""
    n = X.shape[0]
    idx = [int(rng.integers(n))]
    closest = ((X - X[idx[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        nxt = int(rng.choice(n, p=closest / total))
        idx.append(nxt)
        closest = np.minimum(closest, ((X - X[nxt]) ** 2).sum(axis=1))
    return np.array(idx)


class KMeansModes(ClusterMixin, BaseEstimator):
    """Lloyd's k-means with k-means++ seeding.

    Parameters
    ----------
    n_modes : int
        Number of clusters.
    variant : {"centroid", "closest"}
        Report cluster means, or the member point nearest each mean.
    max_iter : int
        Cap on Lloyd iterations; otherwise runs to an assignment fixpoint.
    random_state : int, Generator or None

    Attributes
    ----------
    cluster_centers_ : ndarray of shape (n_modes, d)
    labels_ : ndarray of shape (n,)
    modes_ : ndarray of shape (n_modes, d)
    closest_indices_ : ndarray of shape (n_modes,)
        Row of ``X`` nearest each centroid within its cluster.
    inertia_ : float
    inertia_history_ : list of float
        Objective after each assignment step; non-increasing.
    n_iter_ : int
    """

    def __init__(self, n_modes=8, variant="centroid", max_iter=300, random_state=None):
        self.n_modes = n_modes
        self.variant = variant
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_points(X)
        k = _check_k(X, self.n_modes)
        if self.variant not in ("centroid", "closest"):
            raise ConfigError(f"unknown variant {self.variant!r}", field="variant")
        max_iter = check_int(self.max_iter, "max_iter", minimum=1)
        rng = check_random_state(self.random_state)

        centers = X[kmeans_plusplus(X, k, rng)].copy()
        labels = None
        history = []
        n_iter = 0
        for n_iter in range(1, max_iter + 1):
            d2 = _sq_dists(X, centers)
            new_labels = d2.argmin(axis=1)
            history.append(float(d2[np.arange(len(X)), new_labels].sum()))
            if labels is not None and np.array_equal(new_labels, labels):
                break
            labels = new_labels
            centers = self._update(X, labels, centers, k)
        self.cluster_centers_ = centers
        self.labels_ = labels
        self.inertia_ = float(((X - centers[labels]) ** 2).sum())
        self.inertia_history_ = history
        self.n_iter_ = n_iter

        own = ((X - centers[labels]) ** 2).sum(axis=1)
        closest = np.empty(k, dtype=np.int64)
        for j in range(k):
            members = np.flatnonzero(labels == j)
            closest[j] = members[np.argmin(own[members])]
        self.closest_indices_ = closest
        self.modes_ = centers.copy() if self.variant == "centroid" else X[closest].copy()
        return self

    @staticmethod
    def _update(X, labels, centers, k):
        counts = np.bincount(labels, minlength=k)
        for j in np.flatnonzero(counts == 0):
            # reseed an empty cluster with the worst-served point
            cost = ((X - centers[labels]) ** 2).sum(axis=1)
            donors = counts[labels] > 1
            p = int(np.argmax(np.where(donors, cost, -1.0)))
            counts[labels[p]] -= 1
            labels[p] = j
            counts[j] = 1
        new = np.zeros_like(centers)
        np.add.at(new, labels, X)
        return new / counts[:, None]

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = check_points(X)
        return _sq_dists(X, self.cluster_centers_).argmin(axis=1)


class GaussianMixtureModes(BaseEstimator):
    """EM for a mixture of isotropic Gaussians, seeded by k-means.

    Converges when the mean log-likelihood gains less than ``tol``.
    Variances are kept at or above ``1e-6``; clamping is the exact M-step
    under that constraint, so the log-likelihood stays non-decreasing.
    Estimates that collapse below ``1e-10`` are reported in ``warnings_``.
    """

    _COLLAPSE = 1e-10
    _FLOOR = 1e-6

    def __init__(self, n_modes=8, max_iter=200, tol=1e-8, random_state=None):
        self.n_modes = n_modes
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def _log_joint(self, X, weights, means, variances):
        d = X.shape[1]
        sq = _sq_dists(X, means)
        with np.errstate(divide="ignore"):
            logw = np.log(weights)
        return (logw - 0.5 * sq / variances
                - 0.5 * d * (np.log(2 * np.pi) + np.log(variances)))

    def fit(self, X, y=None):
        X = check_points(X)
        k = _check_k(X, self.n_modes)
        max_iter = check_int(self.max_iter, "max_iter", minimum=1)
        tol = check_real(self.tol, "tol", low=0.0)
        n, d = X.shape

        km = KMeansModes(k, random_state=self.random_state).fit(X)
        means = km.cluster_centers_.copy()
        counts = np.bincount(km.labels_, minlength=k).astype(float)
        weights = counts / n
        sq = ((X - means[km.labels_]) ** 2).sum(axis=1)
        variances = np.bincount(km.labels_, weights=sq, minlength=k) / (counts * d)

        self.warnings_ = []
        variances = self._floor(variances)
        history = []
        n_iter = 0
        for n_iter in range(1, max_iter + 1):
            log_joint = self._log_joint(X, weights, means, variances)
            log_norm = logsumexp(log_joint, axis=1)
            history.append(float(log_norm.mean()))
            if len(history) > 1 and history[-1] - history[-2] < tol:
                break
            resp = np.exp(log_joint - log_norm[:, None])
            nk = resp.sum(axis=0)
            live = nk > 0
            weights = nk / n
            new_means = means.copy()
            new_means[live] = (resp.T @ X)[live] / nk[live, None]
            means = new_means
            sq = _sq_dists(X, means)
            new_var = variances.copy()
            new_var[live] = (resp * sq).sum(axis=0)[live] / (nk[live] * d)
            variances = self._floor(new_var)

        self.weights_ = weights
        self.means_ = means
        self.variances_ = variances
        self.log_likelihood_history_ = history
        self.n_iter_ = n_iter
        self.modes_ = means.copy()
        return self

    def _floor(self, variances):
        low = variances < self._COLLAPSE
        if low.any():
            msg = f"variance of components {np.flatnonzero(low).tolist()} floored at {self._FLOOR}"
            self.warnings_.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=3)
        return np.maximum(variances, self._FLOOR)

    def predict(self, X):
        check_is_fitted(self, "means_")
        X = check_points(X)
        return self._log_joint(X, self.weights_, self.means_, self.variances_).argmax(axis=1)


def default_dbscan_eps(X, min_samples=4):
    """Median distance from each point to its ``min_samples``-th nearest neighbour."""
    X = check_points(X)
    k = min(min_samples, X.shape[0] - 1)
    if k < 1:
        return 1.0
    dist, _ = cKDTree(X).query(X, k=k + 1)
    return float(np.median(dist[:, k]))


class DBSCANModes(ClusterMixin, BaseEstimator):
    """Density-based clustering; modes are the means of non-noise clusters.

    Parameters
    ----------
    eps : float or None
        Neighbourhood radius; ``None`` uses :func:`default_dbscan_eps`.
    min_samples : int
        Neighbourhood size (self included) that makes a point a core point.

    Attributes
    ----------
    labels_ : ndarray
        Cluster index per point, ``-1`` for noise.
    modes_ : ndarray of shape (n_clusters, d)
    eps_ : float
        Radius actually used.
    """

    def __init__(self, eps=None, min_samples=4):
        self.eps = eps
        self.min_samples = min_samples

    def fit(self, X, y=None):
        X = check_points(X)
        min_samples = check_int(self.min_samples, "min_pts", minimum=1)
        if self.eps is None:
            eps = default_dbscan_eps(X, min_samples)
        else:
            eps = check_real(self.eps, "eps_radius", low=0.0, low_open=True)
        if eps <= 0:
            raise DiscoveryError(
                "default radius collapsed to zero; pass an explicit eps_radius"
            )
        neighbours = cKDTree(X).query_ball_point(X, r=eps)
        core = np.array([len(nb) >= min_samples for nb in neighbours])
        labels = np.full(X.shape[0], -1, dtype=np.int64)
        cluster = 0
        for i in range(X.shape[0]):
            if labels[i] != -1 or not core[i]:
                continue
            labels[i] = cluster
            stack = [i]
            while stack:
                p = stack.pop()
                if not core[p]:
                    continue
                for q in neighbours[p]:
                    if labels[q] == -1:
                        labels[q] = cluster
                        stack.append(q)
            cluster += 1
        if cluster == 0:
            raise DiscoveryError(
                f"DBSCAN found no cluster with eps_radius={eps:g}, "
                f"min_pts={min_samples}; increase eps_radius or lower min_pts"
            )
        self.eps_ = eps
        self.labels_ = labels
        self.core_sample_indices_ = np.flatnonzero(core)
        self.modes_ = np.stack([X[labels == c].mean(axis=0) for c in range(cluster)])
        return self


class RandomModes(BaseEstimator):
    """Pick ``n_modes`` data points uniformly without replacement."""

    def __init__(self, n_modes=8, random_state=None):
        self.n_modes = n_modes
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_points(X)
        k = check_int(self.n_modes, "k", minimum=1)
        if k > X.shape[0]:
            raise ConfigError(f"cannot draw {k} of {X.shape[0]} points", field="k")
        rng = check_random_state(self.random_state)
        self.indices_ = rng.choice(X.shape[0], size=k, replace=False)
        self.modes_ = X[self.indices_].copy()
        return self


def kmeans_fit(points, k, variant="centroid", rng=None, cls=None):
    est = KMeansModes(k, variant=variant, random_state=rng).fit(points)
    return ModeSet(cls, est.modes_, f"kmeans-{variant}")


def gmm_em_fit(points, k, rng=None, cls=None):
    est = GaussianMixtureModes(k, random_state=rng).fit(points)
    return ModeSet(cls, est.modes_, "gmm")


def dbscan_modes(points, eps_radius=None, min_pts=4, cls=None):
    est = DBSCANModes(eps=eps_radius, min_samples=min_pts).fit(points)
    return ModeSet(cls, est.modes_, "dbscan")


def random_modes(points, k, rng=None, cls=None):
    est = RandomModes(k, random_state=rng).fit(points)
    return ModeSet(cls, est.modes_, "random")


def make_discoverer(method, k, rng=None, eps_radius=None, min_pts=4):
    """Unfitted estimator for a method tag or CLI alias."""
    try:
        tag = METHOD_ALIASES[method]
    except KeyError:
        raise ConfigError(
            f"unknown method {method!r}; choose from {sorted(METHOD_ALIASES)}",
            field="method",
        ) from None
    if tag == "kmeans-centroid":
        return KMeansModes(k, variant="centroid", random_state=rng)
    if tag == "kmeans-closest":
        return KMeansModes(k, variant="closest", random_state=rng)
    if tag == "gmm":
        return GaussianMixtureModes(k, random_state=rng)
    if tag == "dbscan":
        return DBSCANModes(eps=eps_radius, min_samples=min_pts)
    return RandomModes(k, random_state=rng)


def discover_modes(points, method, k, rng=None, cls=None, eps_radius=None, min_pts=4):
    """Run one discovery method and wrap the result in a :class:`ModeSet`."""
    tag = METHOD_ALIASES.get(method, method)
    est = make_discoverer(method, k, rng, eps_radius=eps_radius, min_pts=min_pts)
    return ModeSet(cls, est.fit(points).modes_, tag)
