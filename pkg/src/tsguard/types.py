"""Shared domain types: series, keys, scores, verdicts."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .exceptions import EmptyIntersection, EmptySeries, OutOfBounds

ALL = "All"

_KEY_RE = re.compile(r"^(?P<metric>[^{}]+?)(?:\{(?P<dims>[^{}]*)\})?$")


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Ordered samples of one metric/dimension combination.

    ``timestamps`` are integer epoch milliseconds, strictly increasing.
    Values must be finite; repair gaps with :func:`repair_missing` first.
    """

    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ts = _frozen_array(self.timestamps, np.int64)
        vals = _frozen_array(self.values, np.float64)
        if ts.shape != vals.shape:
            raise ValueError(
                f"timestamps and values differ in length ({ts.size} != {vals.size})"
            )
        if ts.size > 1 and not np.all(np.diff(ts) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_values(cls, values, start: int = 0, step: int = 1000) -> "TimeSeries":
        """Regularly spaced series, ``step`` milliseconds apart."""
        values = np.asarray(values, dtype=float).reshape(-1)
        return cls(start + step * np.arange(values.size, dtype=np.int64), values)

    def __len__(self) -> int:
        return int(self.values.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return np.array_equal(self.timestamps, other.timestamps) and np.array_equal(
            self.values, other.values
        )

    __hash__ = None

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(self.timestamps, values)

    def is_regular(self) -> bool:
        if len(self) < 3:
            return True
        d = np.diff(self.timestamps)
        return bool(np.all(d == d[0]))


@dataclass(frozen=True, order=True)
class MetricKey:
    """Metric name plus an ordered dimension map.

    ``MetricKey("web_traffic", {"country": "USA"})`` renders as
    ``web_traffic{country=USA}``; :meth:`parse` inverts that.
    """

    metric: str
    dimensions: tuple = ()

    def __post_init__(self):
        if not self.metric:
            raise ValueError("metric name must be non-empty")
        dims = self.dimensions
        if isinstance(dims, Mapping):
            dims = tuple((str(k), str(v)) for k, v in dims.items())
        else:
            dims = tuple((str(k), str(v)) for k, v in dims)
        names = [k for k, _ in dims]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate dimension keys in {names}")
        object.__setattr__(self, "dimensions", dims)

    @property
    def dims(self) -> dict:
        return dict(self.dimensions)

    @property
    def is_aggregate(self) -> bool:
        return bool(self.dimensions) and all(v == ALL for _, v in self.dimensions)

    def __str__(self) -> str:
        if not self.dimensions:
            return self.metric
        inner = ",".join(f"{k}={v}" for k, v in self.dimensions)
        return f"{self.metric}{{{inner}}}"

    @classmethod
    def parse(cls, text: str) -> "MetricKey":
        m = _KEY_RE.match(text.strip())
        if m is None:
            raise ValueError(f"cannot parse metric key {text!r}")
        dims = []
        if m.group("dims"):
            for part in m.group("dims").split(","):
                if "=" not in part:
                    raise ValueError(f"dimension {part!r} in {text!r} lacks '='")
                k, v = part.split("=", 1)
                dims.append((k.strip(), v.strip()))
        return cls(m.group("metric").strip(), tuple(dims))


@dataclass(frozen=True, eq=False)
class ScoreSeries:
    """Per-point anomaly scores; ``train_mask`` marks the fitting prefix."""

    key: MetricKey | None
    timestamps: np.ndarray
    scores: np.ndarray
    train_mask: np.ndarray | None = None

    def __post_init__(self):
        ts = _frozen_array(self.timestamps, np.int64)
        sc = _frozen_array(self.scores, np.float64)
        if ts.shape != sc.shape:
            raise ValueError("scores must align 1:1 with timestamps")
        mask = self.train_mask
        mask = np.zeros(ts.size, bool) if mask is None else _frozen_array(mask, bool)
        if mask.shape != ts.shape:
            raise ValueError("train_mask must align with timestamps")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "scores", sc)
        object.__setattr__(self, "train_mask", mask)

    def __len__(self) -> int:
        return int(self.scores.size)


@dataclass(frozen=True, eq=False)
class VerdictSeries:
    key: MetricKey | None
    timestamps: np.ndarray
    verdicts: np.ndarray
    source: str = ""

    def __post_init__(self):
        ts = _frozen_array(self.timestamps, np.int64)
        v = np.asarray(self.verdicts).reshape(-1)
        if v.size and not np.all((v == 0) | (v == 1)):
            raise ValueError("verdicts must be 0 or 1")
        v = _frozen_array(v, np.int8)
        if ts.shape != v.shape:
            raise ValueError("verdicts must align 1:1 with timestamps")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "verdicts", v)

    def __len__(self) -> int:
        return int(self.verdicts.size)

    @property
    def count(self) -> int:
        return int(self.verdicts.sum())


class SeriesClass(str, enum.Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    TREND = "Trend"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ChangePoint:
    index: int
    timestamp: int
    statistic: float


def align(a: TimeSeries, b: TimeSeries) -> tuple[TimeSeries, TimeSeries]:
    """Restrict both series to their common timestamps."""
    if len(a) == 0 or len(b) == 0:
        raise EmptySeries("cannot align an empty series")
    common, ia, ib = np.intersect1d(
        a.timestamps, b.timestamps, assume_unique=True, return_indices=True
    )
    if common.size == 0:
        raise EmptyIntersection("series share no timestamps")
    return TimeSeries(common, a.values[ia]), TimeSeries(common, b.values[ib])


def slice_window(s: TimeSeries, start_index: int, length: int) -> TimeSeries:
    if start_index < 0 or length < 0 or start_index + length > len(s):
        raise OutOfBounds(
            f"window [{start_index}, {start_index + length}) outside series of length {len(s)}"
        )
    stop = start_index + length
    return TimeSeries(s.timestamps[start_index:stop], s.values[start_index:stop])


def repair_missing(timestamps, values, max_gap: int = 3) -> TimeSeries:
    """Linearly interpolate interior NaN runs of at most ``max_gap`` points.

    Longer runs, and runs touching either end of the series, are dropped.
    Infinite values are treated as missing.
    """
    ts = np.asarray(timestamps, dtype=np.int64)
    vals = np.asarray(values, dtype=float).copy()
    bad = ~np.isfinite(vals)
    if not bad.any():
        return TimeSeries(ts, vals)
    keep = ~bad
    n = vals.size
    i = 0
    while i < n:
        if not bad[i]:
            i += 1
            continue
        j = i
        while j < n and bad[j]:
            j += 1
        # run is [i, j)
        if i > 0 and j < n and (j - i) <= max_gap:
            t0, t1 = ts[i - 1], ts[j]
            v0, v1 = vals[i - 1], vals[j]
            frac = (ts[i:j] - t0) / float(t1 - t0)
            vals[i:j] = v0 + frac * (v1 - v0)
            keep[i:j] = True
        i = j
    return TimeSeries(ts[keep], vals[keep])

