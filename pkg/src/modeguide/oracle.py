"""Class-conditional isotropic Gaussian mixtures with exact diffused scores.

A mixture stays a mixture under the forward process: component ``k`` with
mean ``mu_k`` and variance ``s_k^2`` becomes ``N(sqrt(ab) mu_k,
(ab s_k^2 + 1 - ab) I)``. That makes the score, and therefore the noise
prediction ``eps = -sqrt(1 - ab) * score``, available in closed form, so
the model can stand in for a trained denoiser.

All densities are evaluated in log space.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.special import logsumexp, softmax

from ._validation import check_int, check_random_state
from .exceptions import ConfigError, ShapeError, UnknownClassError

_LOG_2PI = np.log(2.0 * np.pi)


class EpsilonOracle(Protocol):
    """Anything that predicts the noise in ``x_t``.

    ``cls=None`` requests the unconditional prediction.
    """

    def __call__(self, x_t: np.ndarray, t: int, cls=None) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class Mixture:
    """One isotropic Gaussian mixture: weights (K,), means (K, d), variances (K,)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64).reshape(-1)
        means = np.array(self.means, dtype=np.float64)
        variances = np.array(self.variances, dtype=np.float64).reshape(-1)
        if means.ndim == 1:
            means = means[None, :]
        if means.ndim != 2 or means.shape[0] == 0:
            raise ConfigError("need at least one component mean of shape (K, d)",
                              field="means")
        k = means.shape[0]
        if weights.shape != (k,) or variances.shape != (k,):
            raise ShapeError(
                f"weights {weights.shape} and variances {variances.shape} must "
                f"both have length {k}"
            )
        if not np.all(np.isfinite(means)):
            raise ConfigError("all means must be finite", field="means")
        if np.any(weights < 0) or not np.isfinite(weights).all():
            raise ConfigError("weights must be nonnegative", field="weights")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ConfigError(f"weights sum to {weights.sum()!r}, not 1", field="weights")
        if np.any(~np.isfinite(variances)) or np.any(variances <= 0):
            raise ConfigError("variances must be positive and finite", field="variances")
        for arr in (weights, means, variances):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def n_components(self):
        return self.means.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]

    def diffuse(self, alpha_bar):
        """Marginal of ``sqrt(ab) x0 + sqrt(1 - ab) eps`` for ``x0`` from this mixture."""
        ab = float(alpha_bar)
        return Mixture(
            self.weights,
            np.sqrt(ab) * self.means,
            ab * self.variances + (1.0 - ab),
        )

    def _component_logpdf(self, X):
        # (n, K) log w_k + log N(x; mu_k, v_k I)
        sq = ((X[:, None, :] - self.means[None, :, :]) ** 2).sum(axis=-1)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return (logw - 0.5 * sq / self.variances
                - 0.5 * self.dim * (_LOG_2PI + np.log(self.variances)))

    def logpdf(self, x):
        X, single = _as_batch(x, self.dim)
        out = logsumexp(self._component_logpdf(X), axis=1)
        return float(out[0]) if single else out

    def responsibilities(self, x):
        X, single = _as_batch(x, self.dim)
        r = softmax(self._component_logpdf(X), axis=1)
        return r[0] if single else r

    def score(self, x):
        """Gradient of :meth:`logpdf` with respect to ``x``."""
        X, single = _as_batch(x, self.dim)
        r = softmax(self._component_logpdf(X), axis=1)
        pull = (self.means[None, :, :] - X[:, None, :]) / self.variances[None, :, None]
        out = np.einsum("nk,nkd->nd", r, pull)
        return out[0] if single else out

    def sample(self, count, rng):
        comp = rng.choice(self.n_components, size=count, p=self.weights)
        noise = rng.standard_normal((count, self.dim))
        return self.means[comp] + np.sqrt(self.variances[comp])[:, None] * noise


def _as_batch(x, dim):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != dim:
        raise ShapeError(f"expected points of dimension {dim}, got shape {x.shape}")
    return X, single


class GmmClassModel:
    """Per-class isotropic Gaussian mixtures over a shared data space.

    Parameters
    ----------
    components : dict
        Maps each class id to a :class:`Mixture`.
    priors : dict, optional
        Class probabilities used to pool the unconditional density.
        Uniform when omitted.
    """

    def __init__(self, components, priors=None):
        if not components:
            raise ConfigError("model needs at least one class", field="classes")
        comps = {}
        for c, mix in components.items():
            if not isinstance(mix, Mixture):
                mix = Mixture(*mix)
            comps[c] = mix
        dims = {m.dim for m in comps.values()}
        if len(dims) != 1:
            raise ShapeError(f"classes disagree on dimension: {sorted(dims)}")
        self._components = comps
        self.classes = tuple(comps)
        self.dim = dims.pop()
        if priors is None:
            priors = {c: 1.0 / len(comps) for c in comps}
        if set(priors) != set(comps):
            raise ConfigError("priors must name exactly the model classes", field="priors")
        p = np.array([priors[c] for c in self.classes], dtype=np.float64)
        if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ConfigError("priors must be positive and sum to 1", field="priors")
        self.priors = dict(zip(self.classes, p.tolist()))
        self._pooled = Mixture(
            np.concatenate([self.priors[c] * comps[c].weights for c in self.classes]),
            np.concatenate([comps[c].means for c in self.classes]),
            np.concatenate([comps[c].variances for c in self.classes]),
        )

    def __repr__(self):
        sizes = {c: m.n_components for c, m in self._components.items()}
        return f"GmmClassModel(dim={self.dim}, components={sizes})"

    def __eq__(self, other):
        if not isinstance(other, GmmClassModel) or self.classes != other.classes:
            return False
        if self.priors != other.priors:
            return False
        return all(
            np.array_equal(a.weights, b.weights)
            and np.array_equal(a.means, b.means)
            and np.array_equal(a.variances, b.variances)
            for a, b in zip(self._components.values(), other._components.values())
        )

    def mixture(self, cls=None):
        """Mixture of class ``cls``, or the prior-weighted pool if ``None``."""
        if cls is None:
            return self._pooled
        try:
            return self._components[cls]
        except KeyError:
            raise UnknownClassError(f"unknown class id {cls!r}") from None

    def modes(self, cls):
        """Component means of ``cls`` (the ground-truth modes)."""
        return self.mixture(cls).means

    def sample_data(self, cls, count, rng=None):
        count = check_int(count, "count", minimum=1)
        return self.mixture(cls).sample(count, check_random_state(rng))

    def diffused_mixture(self, cls, t, sched):
        """Single-class model describing ``x_t`` given class ``cls``."""
        mix = self.mixture(cls).diffuse(sched.alpha_bar(t))
        return GmmClassModel({cls: mix})

    def log_likelihood(self, cls, x):
        """Log-density of clean data ``x`` under class ``cls``."""
        return self.mixture(cls).logpdf(x)

    def diffused_logpdf(self, cls, x, t, sched):
        return self.mixture(cls).diffuse(sched.alpha_bar(t)).logpdf(x)

    def score(self, cls, x, t, sched):
        """Exact ``grad_x log p_t(x | cls)``; ``cls=None`` is unconditional."""
        return self.mixture(cls).diffuse(sched.alpha_bar(t)).score(x)

    def epsilon(self, cls, x, t, sched):
        """Noise prediction ``-sqrt(1 - ab_t) * score``."""
        ab = sched.alpha_bar(t)
        return -np.sqrt(1.0 - ab) * self.score(cls, x, t, sched)

    def as_oracle(self, sched):
        return AnalyticEpsilon(self, sched)


class AnalyticEpsilon:
    """:class:`EpsilonOracle` backed by a :class:`GmmClassModel`."""

    def __init__(self, model, sched):
        self.model = model
        self.sched = sched
        self.dim = model.dim

    def __call__(self, x_t, t, cls=None):
        return self.model.epsilon(cls, x_t, t, self.sched)


def sample_data(model, cls, count, rng=None):
    return model.sample_data(cls, count, rng)


def diffused_mixture(model, cls, t, sched):
    return model.diffused_mixture(cls, t, sched)


def score(model, cls, x, t, sched):
    return model.score(cls, x, t, sched)


def epsilon_pred(model, cls, x, t, sched):
    return model.epsilon(cls, x, t, sched)


def log_likelihood(model, cls, x):
    return model.log_likelihood(cls, x)
