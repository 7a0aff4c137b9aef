"""Point-wise classification metrics, ROC-AUC, VUS and the benchmark runner."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DegenerateLabels, MisalignedInputs, TSGuardError, UnreadableFile
from .types import ScoreSeries, TimeSeries, VerdictSeries

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _binary(x, name: str) -> np.ndarray:
    if isinstance(x, VerdictSeries):
        x = x.verdicts
    arr = np.asarray(x).reshape(-1)
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{name} must be binary")
    return arr.astype(np.int8)


def _scores(x) -> np.ndarray:
    if isinstance(x, ScoreSeries):
        return np.asarray(x.scores, dtype=float)
    return np.asarray(x, dtype=float).reshape(-1)


def confusion(verdicts, labels) -> ConfusionCounts:
    v = _binary(verdicts, "verdicts")
    y = _binary(labels, "labels")
    if v.shape != y.shape:
        raise MisalignedInputs(f"{v.size} verdicts vs {y.size} labels")
    tp = int(np.sum((v == 1) & (y == 1)))
    fp = int(np.sum((v == 1) & (y == 0)))
    fn = int(np.sum((v == 0) & (y == 1)))
    return ConfusionCounts(tp, fp, int(v.size) - tp - fp - fn, fn)


def precision_recall_f1(c: ConfusionCounts) -> tuple[float, float, float]:
    """Zero whenever a ratio would be 0/0."""
    p = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    r = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def _check_labels(y: np.ndarray) -> None:
    if y.size == 0 or y.min() == y.max():
        raise DegenerateLabels("need at least one positive and one negative label")


def _weighted_auc(scores: np.ndarray, weights: np.ndarray) -> float:
    """ROC area where point i is positive with weight ``w_i`` and negative
    with weight ``1 - w_i``; tied scores count one half."""
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    pos = weights[order]
    neg = 1.0 - pos
    bounds = np.flatnonzero(np.diff(s)) + 1
    starts = np.r_[0, bounds]
    pos_g = np.add.reduceat(pos, starts)
    neg_g = np.add.reduceat(neg, starts)
    neg_below = np.r_[0.0, np.cumsum(neg_g)[:-1]]
    total_pos, total_neg = pos.sum(), neg.sum()
    area = float(np.sum(pos_g * neg_below) + 0.5 * np.sum(pos_g * neg_g))
    return area / (total_pos * total_neg)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC with ties counted one half."""
    s = _scores(scores)
    y = _binary(labels, "labels")
    if s.shape != y.shape:
        raise MisalignedInputs(f"{s.size} scores vs {y.size} labels")
    _check_labels(y)
    return _weighted_auc(s, y.astype(float))


def _weighted_ap(scores: np.ndarray, weights: np.ndarray) -> float:
    """Step-sum average precision with soft labels (threshold at each distinct score)."""
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    w = weights[order]
    bounds = np.flatnonzero(np.diff(s)) + 1
    ends = np.r_[bounds, s.size] - 1
    tp = np.cumsum(w)[ends]
    k = ends + 1.0
    precision = tp / k
    recall = tp / w.sum()
    prev = np.r_[0.0, recall[:-1]]
    return float(np.sum((recall - prev) * precision))


def soft_labels(labels: np.ndarray, buffer: int) -> np.ndarray:
    """Extend each anomalous range by ``buffer`` points on each side.

    Inside a range the weight is 1; at distance ``d`` (1..buffer) outside it
    the weight is ``1 - d / (buffer + 1)``; further away it is 0.
    """
    y = labels.astype(float)
    if buffer <= 0 or not y.any():
        return y
    idx = np.flatnonzero(labels)
    n = y.size
    pos = np.arange(n)
    right = np.searchsorted(idx, pos)
    dist = np.full(n, np.inf)
    has_right = right < idx.size
    dist[has_right] = idx[right[has_right]] - pos[has_right]
    has_left = right > 0
    dist[has_left] = np.minimum(dist[has_left], pos[has_left] - idx[right[has_left] - 1])
    w = np.clip(1.0 - dist / (buffer + 1), 0.0, 1.0)
    return np.maximum(w, y)


def _vus(scores, labels, max_buffer: int, area) -> float:
    s = _scores(scores)
    y = _binary(labels, "labels")
    if s.shape != y.shape:
        raise MisalignedInputs(f"{s.size} scores vs {y.size} labels")
    _check_labels(y)
    if max_buffer < 0:
        raise ValueError("max_buffer must be >= 0")
    values = np.array([area(s, soft_labels(y, b)) for b in range(max_buffer + 1)])
    if max_buffer == 0:
        return float(values[0])
    return float(np.trapezoid(values) / max_buffer)


def vus_roc(scores, labels, max_buffer: int) -> float:
    """Mean ROC-AUC over buffer lengths 0..max_buffer with soft range labels."""
    return _vus(scores, labels, max_buffer, _weighted_auc)


def vus_pr(scores, labels, max_buffer: int) -> float:
    """Mean average precision over buffer lengths 0..max_buffer."""
    return _vus(scores, labels, max_buffer, _weighted_ap)


# --- benchmark harness ---------------------------------------------------------

REPORT_COLUMNS = ("dataset", "series_id", "pipeline", "auc", "f1", "precision",
                  "recall", "vus_roc", "vus_pr", "runtime_ms", "status")


@dataclass
class BenchmarkRow:
    dataset: str
    series_id: str
    pipeline: str
    auc: float | None = None
    f1: float | None = None
    precision: float | None = None
    recall: float | None = None
    vus_roc: float | None = None
    vus_pr: float | None = None
    runtime_ms: float | None = None
    status: str = "ok"


@dataclass
class BenchmarkReport:
    rows: list = field(default_factory=list)

    def aggregate(self) -> dict:
        """Mean of each metric per dataset over rows with status ``ok``."""
        out: dict[str, dict] = {}
        for ds in sorted({r.dataset for r in self.rows}):
            rows = [r for r in self.rows if r.dataset == ds and r.status == "ok"]
            agg = {"series": len([r for r in self.rows if r.dataset == ds]), "scored": len(rows)}
            for m in ("auc", "f1", "precision", "recall", "vus_roc", "vus_pr"):
                vals = [getattr(r, m) for r in rows if getattr(r, m) is not None]
                agg[m] = round(float(np.mean(vals)), 6) if vals else None
            out[ds] = agg
        return out

    def to_csv(self, include_runtime: bool = True) -> str:
        cols = [c for c in REPORT_COLUMNS if include_runtime or c != "runtime_ms"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            d = asdict(r)
            w.writerow(["" if d[c] is None else (f"{d[c]:.6f}" if isinstance(d[c], float) else d[c])
                        for c in cols])
        return buf.getvalue()

    def summary(self) -> str:
        return json.dumps({"datasets": self.aggregate(), "rows": len(self.rows)},
                          indent=2, sort_keys=True)


def read_labeled_csv(path) -> tuple[TimeSeries, np.ndarray]:
    """Read a ``timestamp,value,label`` file."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"timestamp", "value", "label"} <= set(reader.fieldnames):
                raise UnreadableFile(f"{path}: header must contain timestamp,value,label")
            rows = [(int(float(r["timestamp"])), float(r["value"]), int(float(r["label"])))
                    for r in reader]
    except (OSError, ValueError, KeyError) as exc:
        if isinstance(exc, UnreadableFile):
            raise
        raise UnreadableFile(f"{path}: {exc}") from exc
    rows.sort()
    ts = np.array([r[0] for r in rows], dtype=np.int64)
    vals = np.array([r[1] for r in rows])
    labels = np.array([r[2] for r in rows], dtype=np.int8)
    if labels.size and not np.all((labels == 0) | (labels == 1)):
        raise UnreadableFile(f"{path}: labels must be 0 or 1")
    try:
        series = TimeSeries(ts, vals)
    except ValueError as exc:
        raise UnreadableFile(f"{path}: {exc}") from exc
    return series, labels


def evaluate_series(series: TimeSeries, labels: np.ndarray, pipeline, max_buffer: int = 0,
                    seed: int | None = None, dataset: str = "", series_id: str = "") -> BenchmarkRow:
    """Run ``pipeline`` on one labelled series and score the post-training region."""
    from .detectors.api import run_config

    row = BenchmarkRow(dataset, series_id, pipeline.label)
    start = time.perf_counter()
    try:
        scores, verdicts = run_config(pipeline, series, seed=seed)
    except TSGuardError as exc:
        row.status = f"error: {exc}"
        return row
    finally:
        row.runtime_ms = (time.perf_counter() - start) * 1000.0
    keep = ~scores.train_mask
    y = labels[keep]
    row.precision, row.recall, row.f1 = precision_recall_f1(confusion(verdicts.verdicts[keep], y))
    try:
        row.auc = roc_auc(scores.scores[keep], y)
        row.vus_roc = vus_roc(scores.scores[keep], y, max_buffer)
        row.vus_pr = vus_pr(scores.scores[keep], y, max_buffer)
    except DegenerateLabels:
        row.status = "degenerate"
    return row


def benchmark_run(dataset_dir, pipeline, max_buffer: int = 0, seed: int | None = 0,
                  workers: int = 1) -> BenchmarkReport:
    """Evaluate ``pipeline`` on every ``*.csv`` under ``dataset_dir``.

    The dataset name of a file is its parent directory relative to
    ``dataset_dir`` (the directory's own name for top-level files). Rows are
    ordered by (dataset, series id) regardless of ``workers``.
    """
    root = Path(dataset_dir)
    if not root.is_dir():
        raise UnreadableFile(f"{root} is not a directory")
    files = sorted(root.rglob("*.csv"))

    def one(path: Path) -> BenchmarkRow:
        rel = path.parent.relative_to(root)
        dataset = root.name if str(rel) == "." else rel.as_posix()
        try:
            series, labels = read_labeled_csv(path)
        except UnreadableFile as exc:
            log.warning("%s", exc)
            return BenchmarkRow(dataset, path.stem, pipeline.label, status=f"unreadable: {exc}")
        return evaluate_series(series, labels, pipeline, max_buffer, seed, dataset, path.stem)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, files))
    else:
        rows = [one(p) for p in files]
    rows.sort(key=lambda r: (r.dataset, r.series_id))
    return BenchmarkReport(rows)
