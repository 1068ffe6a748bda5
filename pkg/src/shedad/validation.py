"""Input checks shared by the estimator and the CLI."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import ConfigError, DataError


def check_channel_matrix(X, name="X", min_samples=1):
    """2-D float array, one row per substation, finite values only."""
    try:
        X = check_array(X, dtype=np.float64, ensure_all_finite=True, ensure_min_samples=min_samples,
                        input_name=name)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    return X


def check_same_shape(X, other, name):
    other = check_channel_matrix(other, name)
    if other.shape != X.shape:
        raise DataError(f"{name} has shape {other.shape}, expected {X.shape}")
    return other


def check_ids(ids, n):
    if ids is None:
        width = max(3, len(str(n - 1)))
        return tuple(f"S{i:0{width}d}" for i in range(n))
    ids = tuple(str(s) for s in ids)
    if len(ids) != n:
        raise DataError(f"got {len(ids)} ids for {n} rows")
    if len(set(ids)) != n:
        raise DataError("substation ids must be unique")
    return ids


def check_int(value, name, low=None, high=None):
    if not isinstance(value, numbers.Integral) or isinstance(value, bool):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if (low is not None and value < low) or (high is not None and value > high):
        raise ConfigError(f"{name}={value} outside [{low}, {high}]")
    return int(value)


def check_float(value, name, low=None, high=None):
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if (low is not None and value < low) or (high is not None and value > high):
        raise ConfigError(f"{name}={value} outside [{low}, {high}]")
    return float(value)
