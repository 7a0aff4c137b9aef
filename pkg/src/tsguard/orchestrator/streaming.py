"""Record-at-a-time detection.

Each key runs a small state machine: buffer records until the warm-up
length, fit the detector(s) once on that prefix, then emit one verdict per
arriving record. Detectors exposing ``score_point`` are scored in O(1);
others are scored on a trailing window of ``replay_context`` points (or
``streaming.context`` points for detectors whose score depends on the
whole series, which therefore only approximate batch results).

When a refit policy is configured, standardized CUSUM (drift 0.5,
``threshold`` in standard deviations) runs every ``check_every`` records
over the last ``window`` raw values. A detected change starts a new
warm-up from the change point; the old model keeps scoring until the new
one is fitted.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..detectors.registry import EnsembleConfig
from ..exceptions import DuplicateTimestamp, OutOfOrderRecord
from ..mselect import recommend
from ..preprocess.changepoint import cusum_changepoints
from ..types import MetricKey
from .config import PipelineConfig

log = logging.getLogger(__name__)

DEFAULT_WARMUP = 100


@dataclass(frozen=True)
class StreamVerdict:
    key: MetricKey
    timestamp: int
    value: float
    score: float
    verdict: int
    source: str


@dataclass(frozen=True)
class StreamError:
    key: MetricKey
    timestamp: int
    kind: str
    message: str


class _Member:
    __slots__ = ("est", "tau", "ctx", "fast")

    def __init__(self, est, ctx: int, fast: bool):
        self.est = est
        self.tau = est.threshold_value
        self.ctx = ctx
        self.fast = fast


@dataclass
class _KeyState:
    ts: list = field(default_factory=list)  # warm-up buffer
    vals: list = field(default_factory=list)
    members: list | None = None
    quorum: int = 1
    source: str = ""
    trend: tuple | None = None  # (intercept, slope per index) for detrended keys
    origin: int = 0  # index of the first point of the current fit
    count: int = 0  # points seen
    last_ts: int | None = None
    window_ts: deque | None = None
    window_vals: deque | None = None
    recent: deque | None = None
    since_check: int = 0
    pending: tuple | None = None  # (timestamps, values, start index) collected after a change
    failed: bool = False


def _configs(pipeline) -> tuple[list, int, str]:
    if isinstance(pipeline, EnsembleConfig):
        return list(pipeline.members), pipeline.quorum, pipeline.label
    return [pipeline], 1, pipeline.label


def warmup_length(config: PipelineConfig) -> int:
    det = config.stage("detect")
    if config.streaming.warmup is not None:
        return config.streaming.warmup
    if det.mode == "auto":
        return DEFAULT_WARMUP
    members, _, _ = _configs(det.pipeline)
    return max([DEFAULT_WARMUP] + [m.build()._min_length() for m in members])


class StreamProcessor:
    """Feed records with :meth:`process`; read ``errors`` and ``refits``."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.detect = config.stage("detect")
        self.warmup = warmup_length(config)
        self.context = config.streaming.context
        self.refit = config.streaming.refit
        self.states: dict = {}
        self.errors: list[StreamError] = []
        self.refits: list[tuple] = []

    # -- fitting --

    def _fit(self, st: _KeyState, key, ts: list, vals: list) -> None:
        x = np.asarray(vals, dtype=float)
        if self.detect.mode == "auto":
            rec = recommend(x, self.detect.mapping)
            configs, quorum, label = _configs(rec.ensemble)
            label = f"auto:{rec.series_class.value}:{label}"
            st.trend = None
            if rec.detrend:
                n = x.size
                slope = rec.trend.raw_slope / max(n - 1, 1)
                st.trend = (rec.trend.intercept - slope * st.origin, slope)
                x = x - (st.trend[0] + slope * (st.origin + np.arange(n)))
        else:
            configs, quorum, label = _configs(self.detect.pipeline)
        members = []
        tarr = np.asarray(ts, dtype=np.int64)
        for cfg in configs:
            est = cfg.build(self.config.seed)
            est.fit(x)
            ctx = est.replay_context
            ctx = self.context if ctx is None else ctx
            fast = ctx == 1 and est.score_point(float(x[-1]), int(tarr[-1])) is not None
            members.append(_Member(est, ctx, fast))
        st.members, st.quorum, st.source = members, quorum, label
        width = max(m.ctx for m in members)
        st.window_ts = deque(ts[-width:], maxlen=width)
        st.window_vals = deque(x[-width:].tolist(), maxlen=width)

    # -- scoring --

    def _score(self, st: _KeyState, ts: int, value: float) -> tuple[float, int]:
        if st.trend is not None:
            value = value - (st.trend[0] + st.trend[1] * (st.count - 1))
        st.window_ts.append(ts)
        st.window_vals.append(value)
        if len(st.members) == 1:
            m = st.members[0]
            s = m.est.score_point(value, ts) if m.fast else self._window_score(st, m)
            return s, 1 if s > m.tau else 0
        votes = 0
        for m in st.members:
            s = m.est.score_point(value, ts) if m.fast else self._window_score(st, m)
            votes += s > m.tau
        return votes / len(st.members), 1 if votes >= st.quorum else 0

    @staticmethod
    def _window_score(st: _KeyState, m: _Member) -> float:
        k = min(m.ctx, len(st.window_vals))
        vals = np.fromiter(st.window_vals, dtype=float)[-k:]
        ts = np.fromiter(st.window_ts, dtype=np.int64)[-k:]
        return float(m.est.decision_function(vals, timestamps=ts)[-1])

    # -- refit --

    def _check_change(self, st: _KeyState, key, ts: int) -> None:
        st.since_check = 0
        vals = np.fromiter((v for _, v in st.recent), dtype=float, count=len(st.recent))
        cps = cusum_changepoints(vals, self.refit.threshold, drift=0.5, standardize=True)
        if not cps:
            return
        cp = cps[-1].index
        start = st.count - vals.size + cp
        self.refits.append((key, ts, start))
        # points before the change are stale; warm up again from the change point
        tail = list(st.recent)[cp:]
        st.pending = ([t for t, _ in tail], [v for _, v in tail], start)
        st.recent = deque(tail, maxlen=self.refit.window)

    # -- main entry --

    def process(self, key, ts: int, value: float) -> StreamVerdict | None:
        st = self.states.get(key)
        if st is None:
            st = self.states[key] = _KeyState()
            if self.refit is not None:
                st.recent = deque(maxlen=self.refit.window)
        if st.last_ts is not None and ts <= st.last_ts:
            kind = OutOfOrderRecord if ts < st.last_ts else DuplicateTimestamp
            self.errors.append(StreamError(key, ts, kind.__name__,
                                           f"{key}: timestamp {ts} after {st.last_ts}"))
            return None
        if not math.isfinite(value):
            self.errors.append(StreamError(key, ts, "NonFiniteValue", f"{key}: value {value!r} at {ts}"))
            return None
        st.last_ts = ts
        st.count += 1
        if st.failed:
            return None
        if st.members is None:
            st.ts.append(ts)
            st.vals.append(value)
            if len(st.vals) >= self.warmup:
                try:
                    self._fit(st, key, st.ts, st.vals)
                except Exception as exc:  # isolate the key
                    st.failed = True
                    self.errors.append(StreamError(key, ts, type(exc).__name__, f"{key}: {exc}"))
                if st.recent is not None:
                    st.recent.extend(zip(st.ts, st.vals))
                st.ts, st.vals = [], []
            return None

        score, verdict = self._score(st, ts, value)
        if st.recent is not None:
            st.recent.append((ts, value))
            st.since_check += 1
            if st.pending is not None:
                p_ts, p_vals, origin = st.pending
                p_ts.append(ts)
                p_vals.append(value)
                if len(p_vals) >= self.warmup:
                    st.pending = None
                    st.origin = origin
                    try:
                        self._fit(st, key, p_ts, p_vals)
                    except Exception as exc:
                        self.errors.append(StreamError(key, ts, type(exc).__name__, f"{key}: refit: {exc}"))
            elif st.since_check >= self.refit.check_every and len(st.recent) >= 8:
                self._check_change(st, key, ts)
        return StreamVerdict(key, ts, value, float(score), int(verdict), st.source)

    def run(self, records):
        """Yield a :class:`StreamVerdict` per scored record. Records are
        objects with ``key``/``timestamp``/``value`` or 3-tuples."""
        process = self.process
        for r in records:
            if isinstance(r, tuple):
                out = process(*r)
            else:
                out = process(r.key, r.timestamp, r.value)
            if out is not None:
                yield out


def run_streaming(config: PipelineConfig, records, processor: StreamProcessor | None = None):
    proc = processor or StreamProcessor(config)
    yield from proc.run(records)
