"""Rolling-window, cyclic-subseries and ensemble smoothers.

Centered windows are truncated at the series ends rather than padded, so a
point near the edge is summarised by the real samples that exist around it.
Multivariate input is smoothed column by column.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, TransformerMixin

from ..exceptions import InvalidParams, SeriesTooShort
from ..types import TimeSeries
from ..validation import as_matrix, check_positive_int, check_window


def _centered_windows(x: np.ndarray, window: int) -> np.ndarray:
    """``(n, window)`` view of centered windows over NaN-padded data."""
    left = (window - 1) // 2
    right = window // 2
    padded = np.concatenate([np.full(left, np.nan), x, np.full(right, np.nan)])
    return sliding_window_view(padded, window)


def _apply_columns(x, fn):
    """Run ``fn`` on each column of ``x``; restore the input's container type."""
    if isinstance(x, TimeSeries):
        return x.with_values(fn(np.asarray(x.values, dtype=float)))
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        return fn(arr)
    mat = as_matrix(arr)
    return np.column_stack([fn(mat[:, j]) for j in range(mat.shape[1])])


def _length(x) -> int:
    return len(x) if isinstance(x, TimeSeries) else np.asarray(x).shape[0]


def rolling_median(s, window: int):
    """Centered rolling median with truncated windows at the ends."""
    check_window(window, _length(s), odd=True)
    if window == 1:
        return s.with_values(s.values) if isinstance(s, TimeSeries) else np.array(s, float)
    return _apply_columns(s, lambda v: np.nanmedian(_centered_windows(v, window), axis=1))


def moving_average(s, window: int):
    """Centered moving mean with truncated windows at the ends."""
    check_window(window, _length(s))
    if window == 1:
        return s.with_values(s.values) if isinstance(s, TimeSeries) else np.array(s, float)
    return _apply_columns(s, lambda v: np.nanmean(_centered_windows(v, window), axis=1))


def cyclic_subseries_smooth(s, period: int):
    """Replace each point by the median of all points sharing its phase."""
    period = check_positive_int(period, "period", minimum=2)
    n = _length(s)
    if n < 2 * period:
        raise SeriesTooShort(f"need at least {2 * period} points for period {period}, got {n}")

    def smooth(v):
        out = np.empty_like(v)
        for phase in range(period):
            out[phase::period] = np.median(v[phase::period])
        return out

    return _apply_columns(s, smooth)


SMOOTHERS = {
    "rolling_median": (rolling_median, "window"),
    "moving_average": (moving_average, "window"),
    "cyclic_subseries": (cyclic_subseries_smooth, "period"),
}


def apply_smoother(s, config: dict):
    """Run one smoother described by ``{"name": ..., <param>: ...}``."""
    config = dict(config)
    name = config.pop("name", None)
    if name == "ensemble":
        return ensemble_smooth(s, config.get("members", []))
    if name not in SMOOTHERS:
        raise InvalidParams(f"unknown smoother {name!r}")
    fn, param = SMOOTHERS[name]
    if set(config) - {param}:
        raise InvalidParams(f"unexpected parameters for {name}: {sorted(set(config) - {param})}")
    if param not in config:
        raise InvalidParams(f"smoother {name} requires {param!r}")
    return fn(s, config[param])


def ensemble_smooth(s, members: list):
    """Pointwise mean of several smoothers' outputs."""
    if not members:
        raise InvalidParams("ensemble smoother needs at least one member")
    outputs = [apply_smoother(s, m) for m in members]
    if isinstance(s, TimeSeries):
        return s.with_values(np.mean([o.values for o in outputs], axis=0))
    return np.mean(outputs, axis=0)


class _SmootherMixin(TransformerMixin, BaseEstimator):
    """Stateless transformer: ``fit`` only validates."""

    def fit(self, X, y=None):
        self._smooth(X)
        self.n_features_in_ = as_matrix(X).shape[1]
        return self

    def transform(self, X):
        return self._smooth(X)


class RollingMedian(_SmootherMixin):
    def __init__(self, window=3):
        self.window = window

    def _smooth(self, X):
        return rolling_median(X, self.window)


class MovingAverage(_SmootherMixin):
    def __init__(self, window=3):
        self.window = window

    def _smooth(self, X):
        return moving_average(X, self.window)


class CyclicSubseriesSmoother(_SmootherMixin):
    def __init__(self, period=7):
        self.period = period

    def _smooth(self, X):
        return cyclic_subseries_smooth(X, self.period)


class EnsembleSmoother(_SmootherMixin):
    """Mean of member smoothers given as config dicts."""

    def __init__(self, members=None):
        self.members = members

    def _smooth(self, X):
        return ensemble_smooth(X, self.members or [])
