"""Reading keyed series from CSV or line-delimited JSON."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ..exceptions import DuplicateTimestamp, SchemaMismatch, UnreadableFile
from ..types import ALL, MetricKey, TimeSeries, repair_missing
from .config import InputSpec


@dataclass(frozen=True)
class Record:
    key: MetricKey
    timestamp: int  # epoch ms
    value: float
    label: int | None = None


@dataclass
class IngestResult:
    series: dict = field(default_factory=dict)  # MetricKey -> TimeSeries
    labels: dict = field(default_factory=dict)  # MetricKey -> int8 array, when a label column exists
    errors: dict = field(default_factory=dict)  # MetricKey -> message


def parse_timestamp(raw) -> int:
    """Epoch milliseconds from a number or an ISO-8601 string (naive means UTC)."""
    if isinstance(raw, bool):
        raise ValueError(f"bad timestamp {raw!r}")
    if isinstance(raw, (int, float)):
        if not math.isfinite(raw):
            raise ValueError(f"bad timestamp {raw!r}")
        return int(raw)
    text = str(raw).strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return int(float(text))
    except ValueError:
        pass
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(round(dt.timestamp() * 1000))


def _value(raw) -> float:
    if raw is None or (isinstance(raw, str) and raw.strip() == ""):
        return math.nan
    return float(raw)


def _rows(spec: InputSpec, path: Path):
    try:
        if spec.format == "csv":
            with path.open(newline="") as fh:
                reader = csv.DictReader(fh)
                header = reader.fieldnames or []
                yield header
                for i, row in enumerate(reader, start=2):
                    yield i, row
        else:
            with path.open() as fh:
                yield None
                for i, line in enumerate(fh, start=1):
                    if line.strip():
                        try:
                            yield i, json.loads(line)
                        except json.JSONDecodeError as exc:
                            raise UnreadableFile(f"{path}:{i}: {exc.msg}") from None
    except OSError as exc:
        raise UnreadableFile(f"{path}: {exc}") from exc


def _required_columns(spec: InputSpec) -> list[str]:
    cols = [spec.timestamp, spec.value, *spec.dimensions]
    if spec.metric:
        cols.append(spec.metric)
    if spec.label:
        cols.append(spec.label)
    return cols


def read_records(spec: InputSpec, path=None):
    """Yield :class:`Record` objects in file order."""
    path = Path(path if path is not None else spec.path)
    if path is None:
        raise UnreadableFile("input has no path")
    rows = _rows(spec, path)
    header = next(rows)
    required = _required_columns(spec)
    if header is not None:
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaMismatch(f"{path}: missing column(s) {missing}")
    default_metric = spec.metric_name or (path.stem if not spec.metric else None)
    for lineno, row in rows:
        if header is None:
            if not isinstance(row, dict):
                raise SchemaMismatch(f"{path}:{lineno}: expected an object")
            missing = [c for c in required if c not in row]
            if missing:
                raise SchemaMismatch(f"{path}:{lineno}: missing field(s) {missing}")
        try:
            ts = parse_timestamp(row[spec.timestamp])
            value = _value(row[spec.value])
            label = None
            if spec.label:
                label = int(float(row[spec.label]))
                if label not in (0, 1):
                    raise ValueError("label must be 0 or 1")
        except (TypeError, ValueError) as exc:
            raise SchemaMismatch(f"{path}:{lineno}: {exc}") from None
        metric = str(row[spec.metric]) if spec.metric else default_metric
        dims = tuple((d, str(row[d])) for d in spec.dimensions)
        yield Record(MetricKey(metric, dims), ts, value, label)


def _aggregate(series: dict, how: str) -> dict:
    """One ``All`` slice per metric over the timestamps every slice shares."""
    out = {}
    by_metric = defaultdict(list)
    for key, s in series.items():
        if key.dimensions and not key.is_aggregate:
            by_metric[key.metric].append((key, s))
    for metric, members in by_metric.items():
        names = [k for k, _ in members[0][0].dimensions]
        agg_key = MetricKey(metric, tuple((n, ALL) for n in names))
        if agg_key in series:
            continue
        common = members[0][1].timestamps
        for _, s in members[1:]:
            common = np.intersect1d(common, s.timestamps)
        if common.size == 0:
            continue
        stack = np.array([s.values[np.searchsorted(s.timestamps, common)] for _, s in members])
        vals = stack.sum(axis=0) if how == "sum" else stack.mean(axis=0)
        out[agg_key] = TimeSeries(common, vals)
    return out


def group_records(records, spec: InputSpec) -> IngestResult:
    """Group records by key, sort by time, reject duplicate timestamps per
    key, repair short gaps and optionally add the ``All`` aggregate."""
    buckets: dict = defaultdict(list)
    for r in records:
        buckets[r.key].append(r)
    result = IngestResult()
    for key in sorted(buckets):
        recs = sorted(buckets[key], key=lambda r: r.timestamp)
        ts = np.array([r.timestamp for r in recs], dtype=np.int64)
        dup = np.flatnonzero(np.diff(ts) == 0)
        if dup.size:
            result.errors[key] = str(DuplicateTimestamp(f"{key}: duplicate timestamp {int(ts[dup[0]])}"))
            continue
        vals = np.array([r.value for r in recs], dtype=float)
        repaired = repair_missing(ts, vals, spec.max_gap)
        if len(repaired) == 0:
            result.errors[key] = f"{key}: no usable values"
            continue
        result.series[key] = repaired
        if spec.label:
            lab = np.array([r.label for r in recs], dtype=np.int8)
            result.labels[key] = lab[np.isin(ts, repaired.timestamps)]
    if spec.aggregate:
        result.series.update(_aggregate(result.series, spec.aggregate))
        result.series = dict(sorted(result.series.items()))
    return result


def ingest(spec: InputSpec, path=None) -> IngestResult:
    return group_records(read_records(spec, path), spec)


def read_single_series(path) -> TimeSeries:
    """A ``timestamp,value`` file holding one series (extra columns ignored)."""
    spec = InputSpec(path=Path(path), metric_name="series")
    res = ingest(spec)
    if res.errors:
        raise SchemaMismatch("; ".join(res.errors.values()))
    if not res.series:
        raise SchemaMismatch(f"{path}: no rows")
    return next(iter(res.series.values()))
