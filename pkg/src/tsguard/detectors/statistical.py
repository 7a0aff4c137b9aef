"""Statistical detectors: univariate scores and Mahalanobis distance."""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal, stats

from ..preprocess.decompose import stl_with_status
from ..validation import sigma_floor
from .base import BaseDetector


class ZScore(BaseDetector):
    """``|x - mean| / std`` with mean and std taken from the training prefix."""

    def __init__(self, threshold=None):
        self.threshold = threshold

    def _fit(self, x):
        self.mean_ = float(x.mean())
        self.std_ = float(sigma_floor(x.std(ddof=1), self.mean_))

    def _score(self, x, timestamps):
        return np.abs(x - self.mean_) / self.std_

    def score_point(self, value, timestamp=None):
        return abs(value - self.mean_) / self.std_


class MADZScore(BaseDetector):
    """Modified z-score ``0.6745 |x - median| / MAD``."""

    default_threshold = 3.5

    def __init__(self, threshold=None):
        self.threshold = threshold

    def _fit(self, x):
        self.median_ = float(np.median(x))
        mad = float(np.median(np.abs(x - self.median_)))
        self.mad_ = float(sigma_floor(mad, self.median_))

    def _score(self, x, timestamps):
        return 0.6745 * np.abs(x - self.median_) / self.mad_

    def score_point(self, value, timestamp=None):
        return 0.6745 * abs(value - self.median_) / self.mad_


class IQRFences(BaseDetector):
    """Distance outside Tukey fences ``[Q1 - k*IQR, Q3 + k*IQR]``; zero inside."""

    min_length = 4
    default_threshold = 0.0

    def __init__(self, k=1.5, threshold=None):
        self.k = k
        self.threshold = threshold

    def _validate_params(self):
        self._require(self.k >= 0, "k must be non-negative")

    def _fit(self, x):
        q1, q3 = np.percentile(x, [25, 75])
        iqr = q3 - q1
        self.lower_ = float(q1 - self.k * iqr)
        self.upper_ = float(q3 + self.k * iqr)

    def _score(self, x, timestamps):
        return np.maximum(np.maximum(x - self.upper_, self.lower_ - x), 0.0)

    def score_point(self, value, timestamp=None):
        return max(value - self.upper_, self.lower_ - value, 0.0)


def _esd_critical(m: int, alpha: float) -> float:
    """Critical value for the ESD step whose working sample has ``m`` points."""
    p = 1.0 - alpha / (2.0 * m)
    t = stats.t.ppf(p, m - 2)
    return (m - 1) * t / math.sqrt((m - 2 + t * t) * m)


def generalized_esd(x: np.ndarray, max_outliers: int, alpha: float = 0.05,
                    robust: bool = False) -> np.ndarray:
    """Per-point ESD scores; a point is an outlier iff its score exceeds 1.

    Runs ``max_outliers`` removal steps. The point removed at step j scores
    ``max_{i >= j} R_i / lambda_i``, which exceeds 1 exactly when the
    generalized ESD procedure declares it an outlier. Points never removed
    score their deviation against the remaining sample divided by the next
    critical value.
    """
    n = x.size
    k = int(min(max_outliers, n - 3))
    scores = np.zeros(n)
    if k < 1:
        return scores
    remaining = np.ones(n, dtype=bool)
    order = np.empty(k, dtype=int)
    ratios = np.empty(k)

    def deviations(vals):
        if robust:
            center = np.median(vals)
            spread = 1.4826 * np.median(np.abs(vals - center))
        else:
            center = vals.mean()
            spread = vals.std(ddof=1)
        return np.abs(vals - center) / sigma_floor(spread, center)

    for step in range(k):
        idx = np.flatnonzero(remaining)
        dev = deviations(x[idx])
        j = int(np.argmax(dev))
        order[step] = idx[j]
        ratios[step] = dev[j] / _esd_critical(n - step, alpha)
        remaining[idx[j]] = False

    suffix_max = np.maximum.accumulate(ratios[::-1])[::-1]
    scores[order] = suffix_max
    idx = np.flatnonzero(remaining)
    if idx.size >= 3:
        scores[idx] = deviations(x[idx]) / _esd_critical(n - k, alpha)
    return scores


class GrubbsESD(BaseDetector):
    """Generalized ESD test over the scored series; outliers score above 1."""

    min_length = 8
    replay_context = None
    default_threshold = 1.0

    def __init__(self, max_outliers=None, alpha=0.05, threshold=None):
        self.max_outliers = max_outliers
        self.alpha = alpha
        self.threshold = threshold

    def _validate_params(self):
        self._require(0 < self.alpha < 1, "alpha must lie in (0, 1)")
        self._require(self.max_outliers is None or self.max_outliers >= 1,
                      "max_outliers must be >= 1")

    def _fit(self, x):
        pass

    def _max_outliers(self, n):
        return self.max_outliers if self.max_outliers is not None else max(1, n // 10)

    def _score(self, x, timestamps):
        return generalized_esd(x, self._max_outliers(x.size), self.alpha)


def dominant_period(x: np.ndarray, min_acf: float = 0.3) -> int | None:
    """Lag of the highest autocorrelation peak in ``[2, n/3]``, if strong enough."""
    n = x.size
    max_lag = n // 3
    if max_lag < 2:
        return None
    d = x - x.mean()
    denom = float(d @ d)
    if denom == 0:
        return None
    acf = np.array([float(d[:-lag] @ d[lag:]) / denom for lag in range(1, max_lag + 1)])
    best, best_val = None, min_acf
    for lag in range(2, max_lag):
        a = acf[lag - 1]
        if a > best_val and a >= acf[lag - 2] and a >= acf[lag]:
            best, best_val = lag, a
    return best


class SeasonalESD(BaseDetector):
    """Robust ESD on the residual of a robust STL decomposition.

    ``period=None`` estimates the period from the training autocorrelation;
    without a usable period the residual is the deviation from the median.
    """

    min_length = 8
    replay_context = None
    default_threshold = 1.0

    def __init__(self, period=None, max_outliers=None, alpha=0.05, threshold=None):
        self.period = period
        self.max_outliers = max_outliers
        self.alpha = alpha
        self.threshold = threshold

    def _validate_params(self):
        self._require(0 < self.alpha < 1, "alpha must lie in (0, 1)")
        self._require(self.period is None or self.period >= 2, "period must be >= 2")

    def _fit(self, x):
        self.period_ = self.period if self.period is not None else dominant_period(x)

    def _score(self, x, timestamps):
        p = self.period_
        if p is not None and x.size >= 2 * p:
            dec, _ = stl_with_status(x, p, robust=True)
            resid = dec.residual.values
        else:
            resid = x - np.median(x)
        k = self.max_outliers if self.max_outliers is not None else max(1, x.size // 10)
        return generalized_esd(resid, k, self.alpha, robust=True)


class EWMAControl(BaseDetector):
    """EWMA chart; the score is the distance from the training mean in
    units of the control-limit half-width ``L * sigma_ewma``."""

    replay_context = None
    default_threshold = 1.0

    def __init__(self, smoothing=0.2, limit=3.0, threshold=None):
        self.smoothing = smoothing
        self.limit = limit
        self.threshold = threshold

    def _validate_params(self):
        self._require(0 < self.smoothing <= 1, "smoothing must lie in (0, 1]")
        self._require(self.limit > 0, "limit must be positive")

    def _fit(self, x):
        self.mean_ = float(x.mean())
        sd = float(sigma_floor(x.std(ddof=1), self.mean_))
        lam = self.smoothing
        self.width_ = self.limit * sd * math.sqrt(lam / (2.0 - lam))

    def _score(self, x, timestamps):
        lam = self.smoothing
        z, _ = signal.lfilter([lam], [1.0, -(1.0 - lam)], x - self.mean_,
                              zi=[0.0])
        return np.abs(z) / self.width_


class PercentileBand(BaseDetector):
    """Exceedance beyond the training ``[q, 1-q]`` quantile band, in band widths."""

    min_length = 10
    default_threshold = 0.1

    def __init__(self, q=0.01, threshold=None):
        self.q = q
        self.threshold = threshold

    def _validate_params(self):
        self._require(0 <= self.q < 0.5, "q must lie in [0, 0.5)")

    def _fit(self, x):
        lo, hi = np.quantile(x, [self.q, 1.0 - self.q])
        self.lower_, self.upper_ = float(lo), float(hi)
        self.width_ = float(sigma_floor(hi - lo, (hi + lo) / 2))

    def _score(self, x, timestamps):
        return np.maximum(np.maximum(x - self.upper_, self.lower_ - x), 0.0) / self.width_

    def score_point(self, value, timestamp=None):
        return max(value - self.upper_, self.lower_ - value, 0.0) / self.width_


class RollingZScore(BaseDetector):
    """z-score of each point against the ``window`` points preceding it."""

    default_threshold = 3.0

    def __init__(self, window=30, threshold=None):
        self.window = window
        self.threshold = threshold

    def _min_length(self):
        return int(self.window) + 1

    @property
    def replay_context(self):
        return int(self.window) + 1

    def _validate_params(self):
        self._require(int(self.window) == self.window and self.window >= 2, "window must be >= 2")

    def _fit(self, x):
        pass

    def _score(self, x, timestamps):
        w = int(self.window)
        padded = np.concatenate([np.full(w, np.nan), x[:-1]])
        prev = sliding_window_view(padded, w)
        counts = np.sum(~np.isnan(prev), axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            filled = np.where(np.isnan(prev), 0.0, prev)
            mu = filled.sum(axis=1) / np.maximum(counts, 1)
            var = ((np.where(np.isnan(prev), mu[:, None], prev) - mu[:, None]) ** 2).sum(axis=1)
            sd = np.sqrt(var / np.maximum(counts - 1, 1))
        sd = sigma_floor(sd, mu)
        out = np.abs(x - mu) / sd
        out[counts < 2] = 0.0
        return out


class RateDeviation(BaseDetector):
    """z-score of the first difference against training differences."""

    min_length = 3
    replay_context = 2

    def __init__(self, threshold=None):
        self.threshold = threshold

    def _fit(self, x):
        d = np.diff(x)
        self.mean_ = float(d.mean())
        self.std_ = float(sigma_floor(d.std(ddof=1) if d.size > 1 else 0.0, self.mean_))

    def _score(self, x, timestamps):
        out = np.zeros(x.size)
        out[1:] = np.abs(np.diff(x) - self.mean_) / self.std_
        return out


class HistogramRarity(BaseDetector):
    """``log(p_mode / p_bin)`` under a smoothed training histogram.

    Values outside the training range fall in a virtual empty bin. The score
    is zero for the most populated bin.
    """

    min_length = 10
    default_threshold = math.log(50.0)

    def __init__(self, max_bins=100, alpha=0.5, threshold=None):
        self.max_bins = max_bins
        self.alpha = alpha
        self.threshold = threshold

    def _validate_params(self):
        self._require(self.max_bins >= 1, "max_bins must be >= 1")
        self._require(self.alpha > 0, "alpha must be positive")

    def _fit(self, x):
        edges = np.histogram_bin_edges(x, bins="auto")
        if edges.size - 1 > self.max_bins:
            edges = np.histogram_bin_edges(x, bins=int(self.max_bins))
        counts, _ = np.histogram(x, bins=edges)
        self.edges_ = edges
        self.log_count_ = np.log(counts + self.alpha)
        self.log_mode_ = float(self.log_count_.max())
        self.log_empty_ = math.log(self.alpha)

    def _score(self, x, timestamps):
        edges = self.edges_
        b = np.searchsorted(edges, x, side="right") - 1
        b[x == edges[-1]] = edges.size - 2
        inside = (b >= 0) & (b < edges.size - 1)
        logc = np.full(x.size, self.log_empty_)
        logc[inside] = self.log_count_[b[inside]]
        return self.log_mode_ - logc


class Mahalanobis(BaseDetector):
    """Distance to the training mean under a ridge-regularised covariance."""

    multivariate = True
    default_threshold = 4.0

    def __init__(self, ridge=1e-6, threshold=None):
        self.ridge = ridge
        self.threshold = threshold

    def _validate_params(self):
        self._require(self.ridge >= 0, "ridge must be non-negative")

    def _fit(self, X):
        self.mean_ = X.mean(axis=0)
        cov = np.atleast_2d(np.cov(X, rowvar=False))
        d = cov.shape[0]
        scale = max(float(np.trace(cov)) / d, 0.0)
        floor = float(sigma_floor(0.0, np.abs(self.mean_).max())) ** 2
        cov = cov + (self.ridge * scale + floor) * np.eye(d)
        self.precision_ = np.linalg.inv(cov)

    def _score(self, X, timestamps):
        diff = X - self.mean_
        return np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", diff, self.precision_, diff), 0.0))
