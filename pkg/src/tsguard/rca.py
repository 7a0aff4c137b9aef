"""Root cause analysis.

A candidate series is *linked* to a target when an anomaly in the candidate
raises the probability of an anomaly in the target:
``P(target | candidate) > P(target)``. Each candidate also gets a strength
from one of four relationship measures (Pearson, Euclidean, DTW, Granger),
normalised so that larger always means more related.
"""

from __future__ import annotations

import enum
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .detectors.api import run_config
from .exceptions import (
    BandInfeasible,
    EmptySeries,
    InvalidParams,
    MisalignedInputs,
    NoCandidateAnomalies,
    NoCandidates,
    SeriesTooShort,
    SingularRegression,
    ZeroVariance,
)
from .types import MetricKey, TimeSeries, VerdictSeries, align
from .validation import as_values


class RcaMethod(str, enum.Enum):
    PEARSON = "pearson"
    EUCLIDEAN = "euclidean"
    DTW = "dtw"
    GRANGER = "granger"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Attribution:
    candidate: MetricKey | None
    link: bool
    p_target: float
    p_conditional: float
    strength: float = 0.0
    method: RcaMethod | None = None
    flags: tuple = ()


@dataclass(frozen=True)
class RcaReport:
    target: MetricKey
    attributions: tuple
    generated_at: int  # epoch milliseconds

    def to_lines(self) -> list[str]:
        """One JSON object per attribution, keys sorted."""
        lines = []
        for a in self.attributions:
            lines.append(json.dumps({
                "target": str(self.target),
                "candidate": str(a.candidate),
                "method": str(a.method),
                "p_target": a.p_target,
                "p_conditional": a.p_conditional,
                "link": a.link,
                "strength": a.strength,
                "flags": list(a.flags),
            }, sort_keys=True))
        return lines


def _verdicts(v) -> np.ndarray:
    if isinstance(v, VerdictSeries):
        return v.verdicts.astype(bool)
    return np.asarray(v).astype(bool).reshape(-1)


def anomaly_prob(v) -> float:
    """Fraction of points flagged anomalous."""
    arr = _verdicts(v)
    if arr.size == 0:
        raise EmptySeries("empty verdict series")
    return float(arr.mean())


def _check_aligned(target, candidate):
    if isinstance(target, VerdictSeries) and isinstance(candidate, VerdictSeries):
        if not np.array_equal(target.timestamps, candidate.timestamps):
            raise MisalignedInputs("target and candidate verdicts are not aligned")
    t, c = _verdicts(target), _verdicts(candidate)
    if t.shape != c.shape:
        raise MisalignedInputs(f"{t.size} target vs {c.size} candidate verdicts")
    return t, c


def conditional_anomaly_prob(target, candidate, lag_window: int = 0) -> float:
    """Fraction of candidate anomalies at ``t`` followed by a target anomaly
    in ``[t, t + lag_window]`` (positions in the aligned series)."""
    if lag_window < 0:
        raise InvalidParams("lag_window must be >= 0")
    t, c = _check_aligned(target, candidate)
    hits = np.flatnonzero(c)
    if hits.size == 0:
        raise NoCandidateAnomalies("candidate has no anomalies to condition on")
    csum = np.r_[0, np.cumsum(t)]
    hi = np.minimum(hits + lag_window + 1, t.size)
    covered = (csum[hi] - csum[hits]) > 0
    return float(covered.mean())


def causal_link(target, candidate, lag_window: int = 0) -> Attribution:
    p_t = anomaly_prob(target)
    p_c = conditional_anomaly_prob(target, candidate, lag_window)
    return Attribution(None, p_c > p_t, p_t, p_c)


def _pair(a, b):
    if isinstance(a, TimeSeries) and isinstance(b, TimeSeries):
        a, b = align(a, b)
    x, y = as_values(a), as_values(b)
    if x.shape != y.shape:
        raise MisalignedInputs(f"series lengths differ ({x.size} vs {y.size})")
    return x, y


def _znorm(x: np.ndarray, strict: bool) -> np.ndarray:
    sd = x.std()
    if sd <= 1e-12 * max(1.0, float(np.abs(x).max())):
        if strict:
            raise ZeroVariance("series has zero variance")
        return np.zeros_like(x)
    return (x - x.mean()) / sd


def pearson(a, b) -> float:
    x, y = _pair(a, b)
    xs, ys = _znorm(x, True), _znorm(y, True)
    return float(np.clip(np.mean(xs * ys), -1.0, 1.0))


def euclidean(a, b) -> float:
    """L2 distance between the z-normalised series."""
    x, y = _pair(a, b)
    return float(np.linalg.norm(_znorm(x, True) - _znorm(y, True)))


def dtw(a, b, band: int | None = None, normalize: bool = True) -> float:
    """Dynamic time warping cost with absolute-difference local cost.

    ``band`` is a Sakoe-Chiba half-width; it must be at least the length
    difference or no warping path fits inside it.
    """
    x, y = as_values(a), as_values(b)
    n, m = x.size, y.size
    if n == 0 or m == 0:
        raise EmptySeries("dtw needs non-empty series")
    if band is not None and band < abs(n - m):
        raise BandInfeasible(f"band {band} < length difference {abs(n - m)}")
    if normalize:
        x, y = _znorm(x, False), _znorm(y, False)
    inf = math.inf
    prev = [inf] * (m + 1)
    prev[0] = 0.0
    yl = y.tolist()
    for i in range(1, n + 1):
        cur = [inf] * (m + 1)
        xi = float(x[i - 1])
        lo, hi = 1, m
        if band is not None:
            lo, hi = max(1, i - band), min(m, i + band)
        left = inf
        for j in range(lo, hi + 1):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if left < best:
                best = left
            left = abs(xi - yl[j - 1]) + best
            cur[j] = left
        prev = cur
    return float(prev[m])


def _lagged(v: np.ndarray, max_lag: int) -> np.ndarray:
    n = v.size
    return np.column_stack([v[max_lag - k:n - k] for k in range(1, max_lag + 1)])


def _rss(resp, X):
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise SingularRegression("Granger regression design is rank deficient")
    beta, *_ = np.linalg.lstsq(X, resp, rcond=None)
    r = resp - X @ beta
    return float(r @ r)


def granger(candidate, target, max_lag: int = 2, alpha: float = 0.05) -> tuple[float, float, bool]:
    """F-test of whether ``candidate`` lags improve an autoregression of ``target``.

    Returns ``(f_stat, p_value, causal)`` with ``causal = p_value < alpha``.
    """
    x, y = _pair(candidate, target)
    n = y.size
    if max_lag < 1:
        raise InvalidParams("max_lag must be >= 1")
    if n <= 3 * max_lag + 10:
        raise SeriesTooShort(f"granger needs more than {3 * max_lag + 10} points, got {n}")
    resp = y[max_lag:]
    ones = np.ones((resp.size, 1))
    restricted = np.hstack([ones, _lagged(y, max_lag)])
    full = np.hstack([restricted, _lagged(x, max_lag)])
    rss_r = _rss(resp, restricted)
    rss_u = _rss(resp, full)
    dof = resp.size - full.shape[1]
    if rss_u <= 0:
        raise SingularRegression("unrestricted model fits exactly")
    f_stat = max(0.0, ((rss_r - rss_u) / max_lag) / (rss_u / dof))
    p_value = float(stats.f.sf(f_stat, max_lag, dof))
    return float(f_stat), p_value, p_value < alpha


def method_strength(method: RcaMethod, candidate: TimeSeries, target: TimeSeries,
                    max_lag: int = 2, band: int | None = None) -> float:
    method = RcaMethod(method)
    if method is RcaMethod.PEARSON:
        return abs(pearson(candidate, target))
    if method is RcaMethod.EUCLIDEAN:
        return 1.0 / (1.0 + euclidean(candidate, target))
    if method is RcaMethod.DTW:
        c, t = align(candidate, target)
        return 1.0 / (1.0 + dtw(c, t, band))
    _, p, _ = granger(candidate, target, max_lag)
    return 1.0 - p


def _sort_key(a: Attribution):
    return (not a.link, -a.strength, a.candidate)


def _common(tv: VerdictSeries, cv: VerdictSeries, cand_key, target_key):
    if np.array_equal(tv.timestamps, cv.timestamps):
        return tv, cv
    common, it, ic = np.intersect1d(tv.timestamps, cv.timestamps, return_indices=True)
    if common.size == 0:
        raise MisalignedInputs(f"{cand_key} shares no timestamps with {target_key}")
    return (VerdictSeries(tv.key, common, tv.verdicts[it], tv.source),
            VerdictSeries(cv.key, common, cv.verdicts[ic], cv.source))


def _attribute(target_key, target_series, target_v, cand_key, cand_series, cand_v,
               method, lag_window, max_lag) -> Attribution:
    tv, cv = _common(target_v, cand_v, cand_key, target_key)
    flags = []
    p_t = anomaly_prob(tv)
    try:
        p_c = conditional_anomaly_prob(tv, cv, lag_window)
    except NoCandidateAnomalies:
        p_c = 0.0
        flags.append("no-candidate-anomalies")
    try:
        strength = method_strength(method, cand_series, target_series, max_lag)
    except (ZeroVariance, SingularRegression, SeriesTooShort) as exc:
        strength = 0.0
        flags.append(f"strength-unavailable: {type(exc).__name__}")
    link = "no-candidate-anomalies" not in flags and p_c > p_t
    return Attribution(cand_key, link, p_t, p_c, float(strength), RcaMethod(method), tuple(flags))


def attribute(series: dict, verdicts: dict, target: MetricKey, candidates, method=RcaMethod.PEARSON,
              lag_window: int = 0, max_lag: int = 2, workers: int = 1) -> RcaReport:
    """Build a report from verdicts that have already been computed.

    ``series`` and ``verdicts`` map keys to the values and verdicts used for
    the strength measure and the link test respectively.
    """
    candidates = sorted(set(candidates) - {target})
    if not candidates:
        raise NoCandidates(f"no candidate series for {target}")
    method = RcaMethod(method)

    def one(key):
        return _attribute(target, series[target], verdicts[target], key, series[key],
                          verdicts[key], method, lag_window, max_lag)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            attrs = list(pool.map(one, candidates))
    else:
        attrs = [one(k) for k in candidates]
    attrs.sort(key=_sort_key)
    return RcaReport(target, tuple(attrs), int(time.time() * 1000))


def _detect_and_attribute(collection, target, candidates, ensemble, method, lag_window, seed,
                          max_lag, workers) -> RcaReport:
    if not candidates:
        raise NoCandidates(f"no candidate series for {target}")
    keys = [target, *candidates]

    def run(key):
        return run_config(ensemble, collection[key], key, seed)[1]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            verdicts = dict(zip(keys, pool.map(run, keys)))
    else:
        verdicts = {k: run(k) for k in keys}
    return attribute(collection, verdicts, target, candidates, method, lag_window, max_lag, workers)


def cross_dimension_rca(collection: dict, target: MetricKey, ensemble, method=RcaMethod.PEARSON,
                        lag_window: int = 0, seed: int | None = None, max_lag: int = 2,
                        workers: int = 1) -> RcaReport:
    """Rank sibling slices of the target metric (same metric name, different
    dimension values) as explanations for the target's anomalies."""
    if target not in collection:
        raise KeyError(f"target {target} not in collection")
    candidates = sorted(k for k in collection if k.metric == target.metric and k != target)
    return _detect_and_attribute(collection, target, candidates, ensemble, method, lag_window,
                                 seed, max_lag, workers)


def cross_metric_rca(collection: dict, target: MetricKey, candidate_metrics: list, ensemble,
                     method=RcaMethod.PEARSON, lag_window: int = 0, seed: int | None = None,
                     max_lag: int = 2, workers: int = 1) -> RcaReport:
    """Rank an explicit list of other metrics as explanations for the target."""
    if target not in collection:
        raise KeyError(f"target {target} not in collection")
    missing = [k for k in candidate_metrics if k not in collection]
    if missing:
        raise KeyError(f"candidates not in collection: {', '.join(map(str, missing))}")
    candidates = sorted(set(candidate_metrics) - {target})
    return _detect_and_attribute(collection, target, candidates, ensemble, method, lag_window,
                                 seed, max_lag, workers)
