"""Automatic model selection.

:func:`classify` sorts a series into Trend, Stable or Unstable: a rolling
median smoother followed by a linear fit decides Trend, and for the rest an
augmented Dickey-Fuller test separates stationary (Stable) from
non-stationary (Unstable) behaviour. :func:`recommend` maps the class to an
ensemble. :func:`select_with_labels` is the supervised alternative, a grid
search scored by F1.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from .detectors.api import run_detector
from .detectors.registry import DetectorConfig, EnsembleConfig, registry_index
from .evaluation import confusion, precision_recall_f1
from .exceptions import (
    InvalidParams,
    MisalignedInputs,
    NoPositiveLabels,
    SeriesTooShort,
    SingularRegression,
    TSGuardError,
)
from .preprocess.smoothers import rolling_median
from .types import SeriesClass, TimeSeries
from .validation import as_values, check_min_length

log = logging.getLogger(__name__)

TREND_COEFFICIENT = 0.6
TREND_SLOPE = 0.01
ADF_CRITICAL_5PCT = -2.86
MIN_CLASSIFY_LENGTH = 30


@dataclass(frozen=True)
class TrendTestResult:
    coefficient: float
    slope: float
    is_trend: bool
    intercept: float = 0.0  # line fitted to the smoothed values, raw units
    raw_slope: float = 0.0  # per unit of normalised time


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    lags_used: int
    reject_nonstationarity: bool
    n_obs: int = 0
    critical_value: float = ADF_CRITICAL_5PCT


@dataclass(frozen=True)
class Recommendation:
    series_class: SeriesClass
    ensemble: EnsembleConfig
    rationale: str
    detrend: bool = False
    trend: TrendTestResult | None = None
    adf: AdfResult | None = None


def is_trend_rule(coefficient: float, slope: float) -> bool:
    return coefficient > TREND_COEFFICIENT and abs(slope) > TREND_SLOPE


def default_smooth_window(n: int) -> int:
    w = int(n // 10)
    if w % 2 == 0:
        w -= 1
    return max(1, min(31, w))


def trend_test(s, smooth_window: int | None = None) -> TrendTestResult:
    """Rolling-median smooth, then fit a line against time scaled to [0, 1].

    ``coefficient`` is the Pearson correlation of the smoothed values with
    time; ``slope`` is the least-squares slope after dividing the smoothed
    values by their standard deviation, so both are unit-free.
    """
    x = as_values(s)
    n = x.size
    if smooth_window is None:
        smooth_window = default_smooth_window(n)
    check_min_length(n, max(smooth_window, 8))
    smooth = np.asarray(rolling_median(x, smooth_window))
    t = np.linspace(0.0, 1.0, n)
    tc = t - t.mean()
    sc = smooth - smooth.mean()
    sd = float(smooth.std())
    raw_slope = float(tc @ sc / (tc @ tc))
    intercept = float(smooth.mean() - raw_slope * t.mean())
    if sd <= 1e-12 * max(1.0, abs(float(smooth.mean()))):
        return TrendTestResult(0.0, 0.0, False, intercept, 0.0)
    coefficient = float(tc @ sc / math.sqrt((tc @ tc) * (sc @ sc)))
    slope = raw_slope / sd
    return TrendTestResult(coefficient, slope, is_trend_rule(coefficient, slope), intercept, raw_slope)


def default_max_lag(n: int) -> int:
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def _adf_design(y: np.ndarray, lags: int, start: int):
    """Response and regressors for observations ``t = start .. n-1`` (y index)."""
    dy = np.diff(y)
    t = np.arange(start, y.size)
    cols = [np.ones(t.size), y[t - 1]]
    cols += [dy[t - 1 - i] for i in range(1, lags + 1)]
    return dy[t - 1], np.column_stack(cols)


def _ols(resp: np.ndarray, X: np.ndarray):
    k = X.shape[1]
    if np.linalg.matrix_rank(X) < k:
        raise SingularRegression("ADF regression design is rank deficient")
    q, r = np.linalg.qr(X)
    beta = np.linalg.solve(r, q.T @ resp)
    resid = resp - X @ beta
    rss = float(resid @ resid)
    return beta, r, rss


def adf_test(s, max_lag: int | None = None, autolag: bool = True) -> AdfResult:
    """Augmented Dickey-Fuller test with a constant and no trend.

    With ``autolag`` the number of lagged differences is chosen in
    ``0..max_lag`` by minimum AIC over a common estimation sample, then the
    chosen model is refitted on all available observations; otherwise
    exactly ``max_lag`` lags are used. Rejection is at the 5% level using
    the asymptotic critical value -2.86.
    """
    y = as_values(s)
    n = y.size
    if max_lag is None:
        max_lag = default_max_lag(n)
    if max_lag < 0:
        raise InvalidParams("max_lag must be >= 0")
    check_min_length(n, max_lag + 10)

    lags = max_lag
    if autolag:
        best_aic = math.inf
        best = None
        for p in range(max_lag + 1):
            resp, X = _adf_design(y, p, max_lag + 1)
            try:
                _, _, rss = _ols(resp, X)
            except SingularRegression:
                continue
            m = resp.size
            aic = m * math.log(max(rss, 1e-300) / m) + 2 * X.shape[1]
            if aic < best_aic:
                best_aic, best = aic, p
        if best is None:
            raise SingularRegression("every candidate ADF regression is rank deficient")
        lags = best

    resp, X = _adf_design(y, lags, lags + 1)
    beta, r, rss = _ols(resp, X)
    dof = resp.size - X.shape[1]
    if dof <= 0:
        raise SeriesTooShort("not enough observations for the ADF regression")
    rinv = np.linalg.inv(r)
    var_gamma = rss / dof * float(rinv[1] @ rinv[1])
    if var_gamma <= 0:
        raise SingularRegression("zero residual variance in ADF regression")
    stat = float(beta[1] / math.sqrt(var_gamma))
    return AdfResult(stat, lags, stat < ADF_CRITICAL_5PCT, int(resp.size))


def _is_constant(x: np.ndarray) -> bool:
    return float(np.ptp(x)) <= 1e-12 * max(1.0, float(np.max(np.abs(x))))


def classify_detail(s) -> tuple[SeriesClass, TrendTestResult, AdfResult | None]:
    x = as_values(s)
    check_min_length(x.size, MIN_CLASSIFY_LENGTH)
    trend = trend_test(x)
    if trend.is_trend:
        return SeriesClass.TREND, trend, None
    if _is_constant(x):
        # The ADF regression is undefined here; a flat series is as stable as it gets.
        return SeriesClass.STABLE, trend, None
    adf = adf_test(x)
    cls = SeriesClass.STABLE if adf.reject_nonstationarity else SeriesClass.UNSTABLE
    return cls, trend, adf


def classify(s) -> SeriesClass:
    """Trend if the trend gate fires, else Stable if ADF rejects a unit root,
    else Unstable."""
    return classify_detail(s)[0]


def _members(*names: str) -> tuple:
    return tuple(DetectorConfig(n) for n in names)


STABLE_ENSEMBLE = EnsembleConfig(_members("seasonal_esd", "ewma_control", "iqr"), quorum=2)
UNSTABLE_ENSEMBLE = EnsembleConfig(_members("iforest_windowed", "spectral_residual", "mad_zscore"), quorum=2)

DEFAULT_MAPPING = {
    SeriesClass.STABLE: STABLE_ENSEMBLE,
    SeriesClass.UNSTABLE: UNSTABLE_ENSEMBLE,
    SeriesClass.TREND: STABLE_ENSEMBLE,
}


def load_mapping(path) -> dict:
    """Read a YAML mapping ``{Stable|Unstable|Trend: {members: [...], quorum: k}}``."""
    with Path(path).open() as fh:
        raw = yaml.safe_load(fh) or {}
    return parse_mapping(raw)


def parse_mapping(raw: dict) -> dict:
    mapping = {}
    for name, spec in raw.items():
        try:
            cls = SeriesClass(str(name))
        except ValueError:
            raise InvalidParams(f"unknown series class {name!r}") from None
        mapping[cls] = EnsembleConfig.from_dict(spec)
    missing = set(SeriesClass) - set(mapping)
    if missing:
        raise InvalidParams(f"mapping lacks {sorted(c.value for c in missing)}")
    return mapping


def detrend(s, trend: TrendTestResult):
    """Subtract the line fitted to the smoothed series."""
    x = as_values(s)
    t = np.linspace(0.0, 1.0, x.size)
    out = x - (trend.intercept + trend.raw_slope * t)
    return s.with_values(out) if isinstance(s, TimeSeries) else out


def recommend(s, mapping: dict | None = None) -> Recommendation:
    mapping = DEFAULT_MAPPING if mapping is None else mapping
    missing = set(SeriesClass) - set(mapping)
    if missing:
        raise InvalidParams(f"mapping lacks {sorted(c.value for c in missing)}")
    cls, trend, adf = classify_detail(s)
    ensemble = mapping[cls]
    names = ", ".join(m.name for m in ensemble.members)
    if cls is SeriesClass.TREND:
        why = (f"trend gate fired (correlation {trend.coefficient:.3f} > {TREND_COEFFICIENT}, "
               f"|slope| {abs(trend.slope):.3f} > {TREND_SLOPE}); detrend then run {names}")
    elif adf is None:
        why = f"constant series; run {names}"
    else:
        verdict = "rejects" if adf.reject_nonstationarity else "does not reject"
        why = (f"no trend (correlation {trend.coefficient:.3f}); ADF statistic {adf.statistic:.3f} "
               f"{verdict} a unit root at 5%; run {names}")
    return Recommendation(cls, ensemble, why, cls is SeriesClass.TREND, trend, adf)


def _grid_configs(candidate: DetectorConfig, grid: dict | None):
    space = (grid or {}).get(candidate.name, {})
    keys = sorted(space)
    for values in itertools.product(*(space[k] for k in keys)):
        params = dict(candidate.params)
        tau = candidate.tau
        for k, v in zip(keys, values):
            if k == "tau":
                tau = float(v)
            else:
                params[k] = v
        yield replace(candidate, params=params, tau=tau)


def select_with_labels(series, labels, candidates: list, grid: dict | None = None,
                       split: float = 0.7, seed: int | None = None) -> DetectorConfig:
    """Exhaustive grid search by F1 on a chronological split.

    Each configuration is fitted on the first ``split`` of the series and
    evaluated on the rest. ``grid`` maps a detector name to
    ``{param: [values]}``; the key ``tau`` varies the threshold. Ties go to
    the configuration with fewer explicit parameters, then registry order,
    then enumeration order.
    """
    y = np.asarray(labels).astype(int).reshape(-1)
    n = len(series) if isinstance(series, TimeSeries) else np.asarray(series).shape[0]
    if y.size != n:
        raise MisalignedInputs(f"{y.size} labels for {n} points")
    if not y.any():
        raise NoPositiveLabels("labels contain no anomalies")
    if not candidates:
        raise InvalidParams("no candidate detectors")

    best_key, best_cfg = None, None
    order = 0
    for cand in candidates:
        for cfg in _grid_configs(cand, grid):
            cfg = replace(cfg, train_fraction=split)
            try:
                scores, verdicts = run_detector(cfg, series, seed=seed)
            except TSGuardError as exc:
                log.info("skipping %s: %s", cfg, exc)
                order += 1
                continue
            keep = ~scores.train_mask
            _, _, f1 = precision_recall_f1(confusion(verdicts.verdicts[keep], y[keep]))
            n_params = len(cfg.params) + (cfg.tau is not None)
            key = (-f1, n_params, registry_index(cfg.name), order)
            if best_key is None or key < best_key:
                best_key, best_cfg = key, cfg
            order += 1
    if best_cfg is None:
        raise SeriesTooShort("no candidate could be evaluated on this series")
    return best_cfg
