import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from statsmodels.tsa.stattools import adfuller

from tsguard.detectors import DetectorConfig
from tsguard.exceptions import InvalidParams, NoPositiveLabels, SeriesTooShort, SingularRegression
from tsguard.mselect import (
    DEFAULT_MAPPING,
    STABLE_ENSEMBLE,
    UNSTABLE_ENSEMBLE,
    adf_test,
    classify,
    default_max_lag,
    default_smooth_window,
    detrend,
    is_trend_rule,
    parse_mapping,
    recommend,
    select_with_labels,
    trend_test,
)
from tsguard.types import SeriesClass, TimeSeries

from conftest import ar1, ramp, random_walk, spike_series

SEEDS = range(50)


def test_trend_rule_boundaries():
    assert is_trend_rule(0.61, 0.02)
    assert not is_trend_rule(0.6, 0.5)  # strict on the coefficient
    assert not is_trend_rule(0.9, 0.01)  # strict on the slope
    assert is_trend_rule(0.9, -0.02)


def test_smooth_window_default():
    assert default_smooth_window(200) == 19
    assert default_smooth_window(1000) == 31
    assert default_smooth_window(50) == 5


def test_trend_test_examples():
    assert sum(trend_test(ramp(s)).is_trend for s in SEEDS) >= 48
    noise = [np.random.default_rng(s).normal(size=200) for s in SEEDS]
    assert sum(not trend_test(x).is_trend for x in noise) >= 48
    const = trend_test(np.full(50, 3.0))
    assert const.slope == 0 and not const.is_trend


def test_trend_test_too_short():
    with pytest.raises(SeriesTooShort):
        trend_test(np.arange(7.0))


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(-1e3, 1e3), st.integers(0, 10_000))
def test_trend_decision_scale_invariant(a, b, seed):
    x = np.random.default_rng(seed).normal(size=120).cumsum()
    r0, r1 = trend_test(x), trend_test(a * x + b)
    assert math.isclose(r0.coefficient, r1.coefficient, abs_tol=1e-9)
    assert math.isclose(r0.slope, r1.slope, rel_tol=1e-7, abs_tol=1e-9)
    if abs(r0.coefficient - 0.6) > 1e-6 and abs(abs(r0.slope) - 0.01) > 1e-6:
        assert r0.is_trend == r1.is_trend
        assert classify(x) == classify(a * x + b)


def _textbook_adf(y, p):
    """t-ratio on the lagged level via the normal equations."""
    dy = np.diff(y)
    rows, resp = [], []
    for t in range(p + 1, y.size):
        rows.append([1.0, y[t - 1]] + [dy[t - 1 - i] for i in range(1, p + 1)])
        resp.append(dy[t - 1])
    X, z = np.array(rows), np.array(resp)
    xtx_inv = np.linalg.inv(X.T @ X)
    beta = xtx_inv @ X.T @ z
    e = z - X @ beta
    s2 = e @ e / (len(z) - X.shape[1])
    return beta[1] / math.sqrt(s2 * xtx_inv[1, 1])


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("p", [0, 1, 4])
def test_adf_statistic_matches_textbook(seed, p):
    y = ar1(seed, n=300)
    ours = adf_test(y, max_lag=p, autolag=False)
    assert ours.lags_used == p
    assert abs(ours.statistic - _textbook_adf(y, p)) < 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_adf_matches_statsmodels_with_aic(seed):
    for y in (ar1(seed, n=300), random_walk(seed, n=300)):
        ml = default_max_lag(y.size)
        ref = adfuller(y, maxlag=ml, regression="c", autolag="AIC")
        ours = adf_test(y)
        assert ours.lags_used == ref[2]
        assert abs(ours.statistic - ref[0]) < 1e-8


def test_adf_rejection_rates():
    assert sum(adf_test(ar1(s, n=300)).reject_nonstationarity for s in SEEDS) >= 45
    assert sum(adf_test(random_walk(s, n=300)).reject_nonstationarity for s in SEEDS) <= 5


def test_adf_errors():
    with pytest.raises(SingularRegression):
        adf_test(np.full(60, 2.0))
    with pytest.raises(SeriesTooShort):
        adf_test(np.arange(12.0), max_lag=4)
    with pytest.raises(InvalidParams):
        adf_test(np.arange(50.0), max_lag=-1)


def test_default_max_lag():
    assert default_max_lag(100) == 12
    assert default_max_lag(300) == 15


def test_classify_examples():
    assert all(classify(ramp(s)) is SeriesClass.TREND for s in range(20))
    assert all(classify(ar1(s, n=300)) is SeriesClass.STABLE for s in range(20))
    with pytest.raises(SeriesTooShort):
        classify(np.arange(29.0))
    assert classify(np.full(40, 1.0)) is SeriesClass.STABLE


def test_trend_gate_precedes_adf():
    # Stationary noise around a gentle line: ADF rejects, but the trend gate wins.
    rng = np.random.default_rng(1)
    x = np.linspace(0, 1, 300) + rng.normal(size=300)
    assert adf_test(x).reject_nonstationarity
    assert classify(x) is SeriesClass.TREND


def test_recommend_mappings():
    stable = recommend(ar1(0, n=300))
    assert stable.series_class is SeriesClass.STABLE and stable.ensemble == STABLE_ENSEMBLE
    assert [m.name for m in stable.ensemble.members] == ["seasonal_esd", "ewma_control", "iqr"]
    assert stable.ensemble.quorum == 2 and not stable.detrend
    rw = next(random_walk(s, n=300) for s in range(100) if classify(random_walk(s, n=300)) is SeriesClass.UNSTABLE)
    unstable = recommend(rw)
    assert unstable.ensemble == UNSTABLE_ENSEMBLE
    trend = recommend(ramp(0))
    assert trend.detrend and trend.ensemble == STABLE_ENSEMBLE
    assert trend.rationale


def test_detrend_removes_the_line():
    x = ramp(3)
    flat = detrend(x, trend_test(x))
    assert not trend_test(flat).is_trend
    assert abs(np.polyfit(np.arange(x.size), flat, 1)[0]) < 1e-3


def test_mapping_validation():
    with pytest.raises(InvalidParams):
        recommend(ar1(0), {SeriesClass.STABLE: STABLE_ENSEMBLE})
    with pytest.raises(InvalidParams):
        parse_mapping({"Stable": {"members": ["zscore"], "quorum": 1}})
    m = parse_mapping({c.value: {"members": ["zscore"], "quorum": 1} for c in SeriesClass})
    assert set(m) == set(DEFAULT_MAPPING)


def test_select_single_candidate():
    s, at = spike_series(0, n=200)
    labels = np.zeros(200, int)
    labels[at] = 1
    only = DetectorConfig("zscore", tau=3.0)
    assert select_with_labels(s, labels, [only]).name == "zscore"


def test_select_grid_returns_a_perfect_tau():
    s, at = spike_series(0, n=200, height=6)
    labels = np.zeros(200, int)
    labels[at] = 1
    grid = {"zscore": {"tau": [2.0, 3.0, 4.0]}}
    best = select_with_labels(s, labels, [DetectorConfig("zscore")], grid)
    # oracle: evaluate each tau by hand on the held-out 30%
    from tsguard.detectors import run_detector
    from tsguard.evaluation import confusion, precision_recall_f1

    perfect = []
    for tau in (2.0, 3.0, 4.0):
        sc, v = run_detector(DetectorConfig("zscore", tau=tau, train_fraction=0.7), s)
        keep = ~sc.train_mask
        if precision_recall_f1(confusion(v.verdicts[keep], labels[keep]))[2] == 1.0:
            perfect.append(tau)
    assert perfect and best.tau in perfect


def test_select_no_positive_labels():
    with pytest.raises(NoPositiveLabels):
        select_with_labels(np.arange(100.0), np.zeros(100), [DetectorConfig("zscore")])


def test_classify_accepts_timeseries():
    assert classify(TimeSeries.from_values(ramp(1))) is SeriesClass.TREND
