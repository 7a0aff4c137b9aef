import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsguard.exceptions import InvalidParams, NonConvergence, SeriesTooShort, WindowTooLarge
from tsguard.preprocess import (
    ClassicalDecomposer,
    EnsembleSmoother,
    RollingMedian,
    STLDecomposer,
    binseg_changepoints,
    classical_decompose,
    cusum_changepoints,
    cyclic_subseries_smooth,
    ensemble_smooth,
    moving_average,
    rolling_median,
    rpca_decompose,
    stl_decompose,
    stl_with_status,
)
from tsguard.types import TimeSeries


# --- smoothers ---------------------------------------------------------------


def test_rolling_median_examples():
    np.testing.assert_allclose(rolling_median([1, 1, 9, 1, 1], 3), [1, 1, 1, 1, 1])
    np.testing.assert_allclose(rolling_median([1, 2, 3, 4, 5], 3), [1.5, 2, 3, 4, 4.5])
    x = np.array([3.0, -1.0, 7.0])
    np.testing.assert_array_equal(rolling_median(x, 1), x)


def test_rolling_median_rejects_even_or_oversized_window():
    with pytest.raises(InvalidParams):
        rolling_median([1.0, 2.0, 3.0], 2)
    with pytest.raises(WindowTooLarge):
        rolling_median([1.0, 2.0, 3.0], 5)


def test_moving_average_examples():
    np.testing.assert_allclose(moving_average([0, 0, 3, 0, 0], 3), [0, 1, 1, 1, 0])
    np.testing.assert_allclose(moving_average([4.0] * 6, 3), [4.0] * 6)
    np.testing.assert_allclose(moving_average([1.0, 5.0, 2.0], 1), [1.0, 5.0, 2.0])


def test_cyclic_subseries():
    periodic = np.tile([1.0, 5.0, 3.0], 4)
    np.testing.assert_allclose(cyclic_subseries_smooth(periodic, 3), periodic)
    bad = periodic.copy()
    bad[4] = 100.0
    out = cyclic_subseries_smooth(bad, 3)
    assert out[4] == pytest.approx(5.0)
    with pytest.raises(SeriesTooShort):
        cyclic_subseries_smooth(np.ones(5), 3)


def test_ensemble_smooth_is_pointwise_mean():
    x = [0.0, 0.0, 3.0, 0.0, 0.0]
    med = np.asarray(rolling_median(x, 3))
    ma = np.asarray(moving_average(x, 3))
    out = ensemble_smooth(x, [{"name": "rolling_median", "window": 3}, {"name": "moving_average", "window": 3}])
    np.testing.assert_allclose(out, (med + ma) / 2)
    one = ensemble_smooth(x, [{"name": "moving_average", "window": 3}])
    np.testing.assert_allclose(one, ma)
    two = ensemble_smooth(x, [{"name": "moving_average", "window": 3}] * 2)
    np.testing.assert_allclose(two, ma)


def test_smoothers_keep_timestamps_and_work_as_transformers():
    s = TimeSeries.from_values([1.0, 1.0, 9.0, 1.0, 1.0], start=5000)
    out = rolling_median(s, 3)
    assert isinstance(out, TimeSeries) and np.array_equal(out.timestamps, s.timestamps)
    np.testing.assert_allclose(RollingMedian(window=3).fit_transform(s.values), [1, 1, 1, 1, 1])
    ens = EnsembleSmoother(members=[{"name": "moving_average", "window": 3}])
    assert ens.get_params()["members"][0]["name"] == "moving_average"


def test_multivariate_smoothing_is_per_column():
    X = np.column_stack([[1, 1, 9, 1, 1], [0, 0, 3, 0, 0]]).astype(float)
    out = rolling_median(X, 3)
    np.testing.assert_allclose(out[:, 0], [1, 1, 1, 1, 1])
    np.testing.assert_allclose(out[:, 1], rolling_median(X[:, 1], 3))


@given(st.floats(-1e6, 1e6), st.integers(1, 40), st.sampled_from([1, 3, 5, 7]))
def test_smoothers_idempotent_on_constants(c, n, w):
    x = np.full(n + w, c)
    np.testing.assert_allclose(rolling_median(x, w), x)
    np.testing.assert_allclose(moving_average(x, w), x, rtol=1e-12, atol=1e-9)
    assert len(rolling_median(x, w)) == x.size


@given(st.sampled_from([3, 5, 7, 9]), st.data())
def test_rolling_median_removes_short_outlier_runs(w, data):
    n = 40
    run = data.draw(st.integers(1, w // 2))
    start = data.draw(st.integers(w, n - w - run))
    height = data.draw(st.floats(5, 1e6))
    x = np.zeros(n)
    x[start:start + run] = height
    np.testing.assert_allclose(rolling_median(x, w), np.zeros(n))


# --- decomposition -------------------------------------------------------------


def seasonal(seed, n=240, period=12):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    return 0.05 * t + 2 * np.sin(2 * np.pi * t / period) + rng.normal(0, 0.3, n)


def test_classical_identity_and_sine():
    t = np.arange(240)
    x = np.sin(2 * np.pi * t / 12)
    d = classical_decompose(x, 12)
    assert np.max(np.abs(d.residual.values)) < 0.05
    np.testing.assert_allclose(d.trend.values + d.seasonal.values + d.residual.values, x, rtol=1e-9, atol=1e-12)


def test_classical_constant_and_ramp():
    d = classical_decompose(np.full(48, 3.0), 12)
    np.testing.assert_allclose(d.seasonal.values, 0, atol=1e-12)
    np.testing.assert_allclose(d.residual.values, 0, atol=1e-12)
    r = np.arange(60, dtype=float)
    d = classical_decompose(r, 12)
    np.testing.assert_allclose(d.seasonal.values, 0, atol=1e-9)
    np.testing.assert_allclose(d.trend.values[6:-6], r[6:-6], atol=1e-9)


def test_decompose_too_short():
    with pytest.raises(SeriesTooShort):
        classical_decompose(np.ones(10), 12)
    with pytest.raises(SeriesTooShort):
        stl_decompose(np.ones(10), 12)


def test_stl_spike_goes_to_residual_and_robust_helps():
    t = np.arange(240)
    x = 0.02 * t + np.sin(2 * np.pi * t / 12)
    x[100] += 10.0
    robust = stl_decompose(x, 12, robust=True)
    plain, _ = stl_with_status(x, 12, robust=False)
    assert abs(robust.residual.values[100]) > 5.0
    assert abs(robust.residual.values[100]) >= abs(plain.residual.values[100])
    np.testing.assert_allclose(robust.trend.values + robust.seasonal.values + robust.residual.values,
                               x, rtol=1e-9, atol=1e-12)


def test_stl_constant():
    d = stl_decompose(np.full(60, 2.0), 12)
    np.testing.assert_allclose(d.seasonal.values, 0, atol=1e-9)


def test_stl_nonconvergence_is_reported():
    x = np.random.default_rng(0).standard_cauchy(120) * 100
    dec, ok = stl_with_status(x, 12, robust=True, max_outer=1)
    if not ok:
        with pytest.raises(NonConvergence):
            stl_decompose(x, 12, robust=True, max_outer=1)
    np.testing.assert_allclose(dec.trend.values + dec.seasonal.values + dec.residual.values, x, rtol=1e-9)


def test_decomposer_transformers():
    x = seasonal(1)
    res = ClassicalDecomposer(period=12).fit_transform(x)
    np.testing.assert_allclose(res, classical_decompose(x, 12).residual.values)
    des = STLDecomposer(period=12, component="deseasonalized").fit_transform(x)
    assert des.shape == x.shape
    with pytest.raises(InvalidParams):
        STLDecomposer(period=12, component="nope").fit(x)


def rank1_corrupted(seed, n=60, m=40, frac=0.05):
    rng = np.random.default_rng(seed)
    L = np.outer(rng.normal(size=n), rng.normal(size=m))
    mask = rng.random((n, m)) < frac
    S = np.zeros((n, m))
    S[mask] = rng.choice([-1, 1], mask.sum()) * rng.uniform(5, 10, mask.sum())
    return L, S, mask


def support_f1(est, mask, tol=1e-3):
    pred = np.abs(est) > tol
    tp = np.sum(pred & mask)
    if tp == 0:
        return 0.0
    p, r = tp / pred.sum(), tp / mask.sum()
    return 2 * p * r / (p + r)


def test_rpca_recovers_sparse_support():
    L, S, mask = rank1_corrupted(0)
    res = rpca_decompose(L + S)
    assert res.converged
    assert support_f1(res.sparse, mask) >= 0.9
    np.testing.assert_allclose(res.low_rank + res.sparse, L + S, atol=1e-4)


def test_rpca_clean_and_zero():
    L, _, _ = rank1_corrupted(1)
    res = rpca_decompose(L)
    assert np.linalg.norm(res.sparse) / np.linalg.norm(L) < 1e-6
    z = rpca_decompose(np.zeros((5, 4)))
    assert not z.low_rank.any() and not z.sparse.any()


def test_rpca_residual_shrinks_to_tolerance():
    # The augmented-Lagrangian iterates do not decrease the nuclear+l1 objective
    # monotonically (the first iterate starts from L=S=0); the constraint
    # residual is what the solver drives down.
    L, S, _ = rank1_corrupted(2)
    res = rpca_decompose(L + S, tol=1e-7)
    assert res.residual[-1] <= 1e-7
    assert res.residual[-1] < res.residual[0]


# --- change points -------------------------------------------------------------


def step(seed, n=200, at=100, shift=5.0, sd=1.0):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, sd, n)
    x[at:] += shift * sd
    return x


def test_cusum_constant_and_infinite_threshold():
    assert cusum_changepoints(np.ones(50), 5.0) == []
    assert cusum_changepoints(step(0), float("inf")) == []


def test_cusum_single_step_example():
    hits = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        x = np.r_[rng.normal(0, 0.1, 100), 5 + rng.normal(0, 0.1, 100)]
        cps = cusum_changepoints(x, threshold=5.0, drift=0.5)
        hits += len(cps) == 1 and abs(cps[0].index - 100) <= 5
    assert hits >= 48


def test_binseg_examples():
    rng = np.random.default_rng(0)
    assert binseg_changepoints(rng.normal(size=200), penalty=1e6) == []
    x = np.r_[np.zeros(30), np.ones(30) * 4] + rng.normal(0, 0.5, 60)
    cps = binseg_changepoints(x, penalty=0.0, max_cps=1, normalize=False)
    costs = [np.sum((x[:k] - x[:k].mean()) ** 2) + np.sum((x[k:] - x[k:].mean()) ** 2) for k in range(2, 59)]
    assert cps[0].index == 2 + int(np.argmin(costs))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_changepoints_sorted(seed):
    rng = np.random.default_rng(seed)
    x = np.repeat(rng.normal(0, 5, 5), 40) + rng.normal(size=200)
    for cps in (cusum_changepoints(x, 5.0), binseg_changepoints(x, 10.0)):
        idx = [c.index for c in cps]
        assert idx == sorted(set(idx))
