"""Batch pipeline: preprocess -> detect -> rca -> postprocess.

Keys are independent units of work and may be processed by several
threads; results are merged in sorted key order so the output never
depends on the worker count or on completion order.
"""

from __future__ import annotations

import logging
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from ..detectors.api import run_config
from ..mselect import detrend, recommend
from ..preprocess.decompose import ClassicalDecomposer, STLDecomposer
from ..preprocess.smoothers import apply_smoother
from ..rca import attribute
from ..types import MetricKey, ScoreSeries, TimeSeries, VerdictSeries
from .config import DetectStage, PipelineConfig, RcaStage
from .ingest import IngestResult, ingest

log = logging.getLogger(__name__)


@dataclass
class KeyResult:
    key: MetricKey
    series: TimeSeries
    scores: ScoreSeries | None = None
    verdicts: VerdictSeries | None = None
    source: str = ""
    series_class: str | None = None
    error: str | None = None


@dataclass
class PipelineResult:
    keys: dict = field(default_factory=dict)  # MetricKey -> KeyResult
    rca_reports: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)  # str(key) or stage -> message
    sink_errors: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def rows(self):
        """``(key, ts, value, score, verdict, source)`` in key then time order;
        score and verdict are ``None`` for keys without detection output."""
        for key in sorted(self.keys):
            kr = self.keys[key]
            if kr.error is not None:
                continue
            s = kr.series
            for i in range(len(s)):
                if kr.verdicts is None:
                    yield key, int(s.timestamps[i]), float(s.values[i]), None, None, kr.source
                else:
                    yield (key, int(s.timestamps[i]), float(s.values[i]), float(kr.scores.scores[i]),
                           int(kr.verdicts.verdicts[i]), kr.source)

    def summary(self) -> dict:
        return {
            "aggregates": self.aggregates,
            "errors": self.errors,
            "sink_errors": self.sink_errors,
            "metadata": self.metadata,
        }


def _preprocess(s: TimeSeries, opts: dict) -> TimeSeries:
    if "smoother" in opts:
        s = apply_smoother(s, opts["smoother"])
    if "decompose" in opts:
        d = opts["decompose"]
        comp = d.get("component", "residual")
        if d["method"] == "stl":
            tr = STLDecomposer(period=d["period"], robust=bool(d.get("robust", True)), component=comp)
        else:
            tr = ClassicalDecomposer(period=d["period"], component=comp)
        s = s.with_values(tr.fit_transform(s.values))
    return s


def _detect(key: MetricKey, s: TimeSeries, stage: DetectStage, seed: int):
    if stage.mode == "explicit":
        scores, verdicts = run_config(stage.pipeline, s, key, seed)
        return scores, verdicts, stage.pipeline.label, None
    rec = recommend(s, stage.mapping)
    x = detrend(s, rec.trend) if rec.detrend else s
    scores, verdicts = run_config(rec.ensemble, x, key, seed)
    return scores, verdicts, f"auto:{rec.series_class.value}:{rec.ensemble.label}", rec.series_class.value


def process_key(key: MetricKey, series: TimeSeries, config: PipelineConfig) -> KeyResult:
    """Run the per-key stages; any failure is captured on the result."""
    kr = KeyResult(key, series)
    stage = "preprocess"
    try:
        x = series
        pre = config.stage("preprocess")
        if pre is not None:
            x = _preprocess(x, pre)
        stage = "detect"
        det = config.stage("detect")
        if det is not None:
            kr.scores, kr.verdicts, kr.source, kr.series_class = _detect(key, x, det, config.seed)
    except Exception as exc:  # isolate one key's failure from the rest
        kr.error = f"{stage}: {type(exc).__name__}: {exc}"
        log.warning("%s failed at %s", key, kr.error)
    return kr


def _day(ts_ms: int) -> str:
    return datetime.fromtimestamp(ts_ms / 1000.0, tz=timezone.utc).strftime("%Y-%m-%d")


def postprocess(keys: dict) -> dict:
    """Anomaly counts per key and per key per UTC day."""
    per_key, per_day = {}, {}
    for key in sorted(keys):
        kr = keys[key]
        if kr.verdicts is None:
            continue
        flagged = kr.verdicts.timestamps[kr.verdicts.verdicts == 1]
        per_key[str(key)] = int(flagged.size)
        per_day[str(key)] = dict(sorted(Counter(_day(int(t)) for t in flagged).items()))
    return {"anomalies_per_key": per_key, "anomalies_per_day": per_day}


def _rca(stage: RcaStage, keys: dict, workers: int):
    ok = {k: kr for k, kr in keys.items() if kr.error is None and kr.verdicts is not None}
    if stage.target not in ok:
        raise KeyError(f"rca target {stage.target} has no detection output")
    if stage.kind == "cross_dimension":
        cands = [k for k in ok if k.metric == stage.target.metric and k != stage.target]
    else:
        missing = [str(k) for k in stage.candidates if k not in ok]
        if missing:
            raise KeyError(f"rca candidates without detection output: {', '.join(missing)}")
        cands = list(stage.candidates)
    series = {k: kr.series for k, kr in ok.items()}
    verdicts = {k: kr.verdicts for k, kr in ok.items()}
    return attribute(series, verdicts, stage.target, cands, stage.method, stage.lag_window,
                     stage.max_lag, workers)


def run_pipeline(config: PipelineConfig, data: IngestResult | dict | None = None,
                 workers: int | None = None) -> PipelineResult:
    """Execute the configured stages over every key.

    ``data`` defaults to ingesting ``config.input``; a plain dict of
    ``MetricKey -> TimeSeries`` is accepted too.
    """
    started = time.perf_counter()
    workers = config.workers if workers is None else workers
    if data is None:
        data = ingest(config.input)
    if isinstance(data, IngestResult):
        series, errors = data.series, {str(k): f"ingest: {v}" for k, v in data.errors.items()}
    else:
        series, errors = dict(data), {}
    result = PipelineResult(errors=errors)
    keys = sorted(series)

    t0 = time.perf_counter()
    if workers > 1 and len(keys) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(lambda k: process_key(k, series[k], config), keys))
    else:
        outs = [process_key(k, series[k], config) for k in keys]
    timings = {"keys_ms": (time.perf_counter() - t0) * 1000.0}
    for kr in outs:
        result.keys[kr.key] = kr
        if kr.error is not None:
            result.errors[str(kr.key)] = kr.error

    rca_stage = config.stage("rca")
    if rca_stage is not None:
        t0 = time.perf_counter()
        try:
            result.rca_reports.append(_rca(rca_stage, result.keys, workers))
        except Exception as exc:
            result.errors["rca"] = f"rca: {type(exc).__name__}: {exc}"
        timings["rca_ms"] = (time.perf_counter() - t0) * 1000.0

    if config.stage("postprocess") is not None:
        result.aggregates = postprocess(result.keys)

    classes = {str(k): kr.series_class for k, kr in sorted(result.keys.items()) if kr.series_class}
    result.metadata = {
        "config_hash": config.config_hash,
        "seed": config.seed,
        "workers": workers,
        "keys": len(keys),
        "failed_keys": sorted(result.errors),
        "timings_ms": {**timings, "total_ms": (time.perf_counter() - started) * 1000.0},
    }
    if classes:
        result.metadata["series_class"] = classes
    return result


def anomaly_indices(result: PipelineResult, key: MetricKey) -> np.ndarray:
    kr = result.keys[key]
    return np.flatnonzero(kr.verdicts.verdicts) if kr.verdicts is not None else np.zeros(0, int)
