"""Functional entry points: fit, score, threshold, detect, vote."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import InvalidParams, MisalignedInputs
from ..types import MetricKey, ScoreSeries, TimeSeries, VerdictSeries
from ..validation import check_min_length
from .base import BaseDetector, apply_threshold_array
from .registry import DetectorConfig, EnsembleConfig


@dataclass(frozen=True)
class DetectorState:
    """A fitted detector. Scoring reads but never modifies ``estimator``."""

    config: DetectorConfig
    estimator: BaseDetector
    fitted_on: tuple  # (first timestamp, last timestamp, n_points)


def _timestamps_of(s) -> np.ndarray:
    if isinstance(s, TimeSeries):
        return s.timestamps
    return np.arange(np.asarray(s).shape[0], dtype=np.int64)


def _head(s, n: int):
    if isinstance(s, TimeSeries):
        return TimeSeries(s.timestamps[:n], s.values[:n])
    return np.asarray(s)[:n]


def train_length(config: DetectorConfig, n: int) -> int:
    return int(np.floor(config.train_fraction * n + 1e-9))


def fit(config: DetectorConfig, train, seed: int | None = None) -> DetectorState:
    est = config.build(seed)
    est.fit(train)
    ts = _timestamps_of(train)
    return DetectorState(config, est, (int(ts[0]), int(ts[-1]), int(ts.size)))


def score(state: DetectorState, s, key: MetricKey | None = None) -> ScoreSeries:
    ts = _timestamps_of(s)
    return ScoreSeries(key, ts, state.estimator.decision_function(s, timestamps=ts))


def apply_threshold(scores: ScoreSeries, tau: float, source: str = "") -> VerdictSeries:
    """Verdict 1 iff score is strictly greater than ``tau``."""
    return VerdictSeries(scores.key, scores.timestamps, apply_threshold_array(scores.scores, tau), source)


def run_detector(config: DetectorConfig, s, key: MetricKey | None = None,
                 seed: int | None = None) -> tuple[ScoreSeries, VerdictSeries]:
    """Fit on the training prefix, score the full series and threshold.

    Points in the prefix keep their scores (flagged in ``train_mask``) but
    never receive a positive verdict.
    """
    ts = _timestamps_of(s)
    n = ts.size
    n_train = train_length(config, n)
    est = config.build(seed)
    check_min_length(n_train, est._min_length(), f"training prefix ({config.train_fraction:g} of {n})")
    state = fit(config, _head(s, n_train), seed)
    raw = score(state, s, key)
    mask = np.zeros(n, dtype=bool)
    mask[:n_train] = True
    scores = ScoreSeries(key, ts, raw.scores, mask)
    verdicts = apply_threshold_array(scores.scores, state.estimator.threshold_value)
    verdicts[mask] = 0
    return scores, VerdictSeries(key, ts, verdicts, config.label)


def detect(config: DetectorConfig, s, key: MetricKey | None = None,
           seed: int | None = None) -> VerdictSeries:
    return run_detector(config, s, key, seed)[1]


def majority_vote(verdict_sets: list[VerdictSeries], quorum: int,
                  source: str = "majority_vote") -> VerdictSeries:
    """1 where at least ``quorum`` members vote 1."""
    if not verdict_sets:
        raise InvalidParams("need at least one verdict series")
    if not 1 <= quorum <= len(verdict_sets):
        raise InvalidParams(f"quorum must lie in [1, {len(verdict_sets)}], got {quorum}")
    ts = verdict_sets[0].timestamps
    for v in verdict_sets[1:]:
        if not np.array_equal(v.timestamps, ts):
            raise MisalignedInputs("verdict series are not aligned on identical timestamps")
    votes = np.sum([v.verdicts.astype(int) for v in verdict_sets], axis=0)
    return VerdictSeries(verdict_sets[0].key, ts, (votes >= quorum).astype(np.int8), source)


def run_ensemble(ensemble: EnsembleConfig, s, key: MetricKey | None = None,
                 seed: int | None = None) -> tuple[ScoreSeries, VerdictSeries]:
    """Run every member and vote. The score is the fraction of members
    voting anomalous, so it is in ``[0, 1]``."""
    runs = [run_detector(m, s, key, seed) for m in ensemble.members]
    verdicts = majority_vote([v for _, v in runs], ensemble.quorum, ensemble.label)
    frac = np.mean([v.verdicts for _, v in runs], axis=0)
    mask = np.any([sc.train_mask for sc, _ in runs], axis=0)
    return ScoreSeries(key, verdicts.timestamps, frac, mask), verdicts


def run_config(cfg, s, key: MetricKey | None = None, seed: int | None = None):
    """Dispatch on a DetectorConfig or EnsembleConfig."""
    if isinstance(cfg, EnsembleConfig):
        return run_ensemble(cfg, s, key, seed)
    return run_detector(cfg, s, key, seed)
