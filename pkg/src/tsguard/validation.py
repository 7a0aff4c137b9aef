"""Input validation helpers shared by estimators and functional entry points."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import InvalidParams, SeriesTooShort, WindowTooLarge
from .types import TimeSeries


def as_values(x) -> np.ndarray:
    """1-D float array from a TimeSeries or array-like."""
    if isinstance(x, TimeSeries):
        return np.asarray(x.values, dtype=float)
    arr = check_array(x, ensure_2d=False, dtype=np.float64, ensure_min_samples=0)
    if arr.ndim != 1:
        if arr.ndim == 2 and arr.shape[1] == 1:
            return arr[:, 0]
        raise ValueError(f"expected a univariate series, got shape {arr.shape}")
    return arr


def as_matrix(x) -> np.ndarray:
    """2-D float array ``(n_samples, n_features)``; 1-D input becomes one column."""
    if isinstance(x, TimeSeries):
        return np.asarray(x.values, dtype=float)[:, None]
    arr = check_array(x, ensure_2d=False, dtype=np.float64, ensure_min_samples=0)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def check_min_length(n: int, minimum: int, what: str = "series") -> None:
    if n < minimum:
        raise SeriesTooShort(f"{what} has {n} points, at least {minimum} required")


def check_window(window, n: int, *, odd: bool = False, name: str = "window") -> int:
    if not isinstance(window, numbers.Integral) or window < 1:
        raise InvalidParams(f"{name} must be a positive integer, got {window!r}")
    if odd and window % 2 == 0:
        raise InvalidParams(f"{name} must be odd, got {window}")
    if window > n:
        raise WindowTooLarge(f"{name}={window} exceeds series length {n}")
    return int(window)


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if not isinstance(value, numbers.Integral) or value < minimum:
        raise InvalidParams(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def sigma_floor(sigma, mu):
    """Lower bound on a spread estimate so constant data scores zero, not NaN."""
    return np.maximum(sigma, 1e-12 * np.maximum(1.0, np.abs(mu)))
