import numpy as np
import pytest

from tsguard.types import TimeSeries


def spike_series(seed, n=200, at=None, height=6.0):
    """N(0,1) noise with one additive spike (default 10 points from the end)."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    at = n - 10 if at is None else at
    x[at] += height
    return TimeSeries.from_values(x), at


def ar1(seed, n=300, phi=0.5):
    rng = np.random.default_rng(seed)
    e = rng.normal(size=n)
    x = np.empty(n)
    x[0] = e[0]
    for t in range(1, n):
        x[t] = phi * x[t - 1] + e[t]
    return x


def random_walk(seed, n=300):
    return np.cumsum(np.random.default_rng(seed).normal(size=n))


def ramp(seed, n=300):
    rng = np.random.default_rng(seed)
    base = np.linspace(0.0, 10.0, n)
    return base + rng.normal(0.0, 0.1 * np.ptp(base), n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def web_traffic(seed, n=200, at=150, height=8.0):
    """USA carries a spike at ``at``; UK is flat; All is their sum."""
    from tsguard.types import MetricKey

    rng = np.random.default_rng(seed)
    ts = np.arange(n, dtype=np.int64) * 60_000
    usa = 100.0 + rng.normal(size=n)
    usa[at] += height
    uk = np.full(n, 50.0)
    keys = {c: MetricKey("web_traffic", (("country", c),)) for c in ("All", "USA", "UK")}
    return {
        keys["All"]: TimeSeries(ts, usa + uk),
        keys["USA"]: TimeSeries(ts, usa),
        keys["UK"]: TimeSeries(ts, uk),
    }, keys


def lagged_pair(seed, n=500, coef=0.8):
    """x white noise, y_t = coef * x_{t-1} + noise."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    y = np.r_[0.0, coef * x[:-1]] + rng.normal(size=n)
    return x, y


_CRITERIA: dict = {}


def pytest_runtest_logreport(report):
    if report.when == "call":
        for line in report.capstdout.splitlines():
            if line.startswith("criterion "):
                _CRITERIA[int(line.split()[1].rstrip(":"))] = line


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
