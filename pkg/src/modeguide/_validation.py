"""Input validation helpers shared by estimators and functions."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import ConfigError, ShapeError


def check_points(X, name="X", allow_empty=False):
    """Return ``X`` as a finite float64 array of shape (n, d)."""
    try:
        X = check_array(
            X,
            dtype=np.float64,
            ensure_2d=True,
            ensure_min_samples=0 if allow_empty else 1,
            ensure_all_finite=True,
        )
    except ValueError as exc:
        raise ShapeError(f"{name}: {exc}") from exc
    return X


def check_vector(x, dim=None, name="x"):
    """Return ``x`` as a finite 1-d float64 array, optionally of length ``dim``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"{name} must be 1-dimensional, got shape {x.shape}")
    if dim is not None and x.shape[0] != dim:
        raise ShapeError(f"{name} has dimension {x.shape[0]}, expected {dim}")
    return x


def check_same_shape(a, b, names=("a", "b")):
    if np.shape(a) != np.shape(b):
        raise ShapeError(
            f"{names[0]} has shape {np.shape(a)} but {names[1]} has shape {np.shape(b)}"
        )


def check_int(value, name, minimum=None, maximum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigError(f"must be an integer, got {value!r}", field=name)
    value = int(value)
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be >= {minimum}, got {value}", field=name)
    if maximum is not None and value > maximum:
        raise ConfigError(f"must be <= {maximum}, got {value}", field=name)
    return value


def check_real(value, name, low=None, high=None, low_open=False, high_open=False):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ConfigError(f"must be a real number, got {value!r}", field=name)
    value = float(value)
    if not np.isfinite(value):
        raise ConfigError(f"must be finite, got {value}", field=name)
    if low is not None and (value < low or (low_open and value == low)):
        op = ">" if low_open else ">="
        raise ConfigError(f"must be {op} {low}, got {value}", field=name)
    if high is not None and (value > high or (high_open and value == high)):
        op = "<" if high_open else "<="
        raise ConfigError(f"must be {op} {high}, got {value}", field=name)
    return value


def check_random_state(seed):
    """Turn ``seed`` into a :class:`numpy.random.Generator`.

    Accepts ``None``, an integer, a ``SeedSequence`` or an existing
    ``Generator`` (returned unchanged).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise ConfigError(f"cannot build a random generator from {seed!r}", field="random_state")
