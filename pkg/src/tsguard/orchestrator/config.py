"""Pipeline configuration: YAML schema, loading and validation.

A config is a YAML mapping::

    seed: 0
    mode: batch            # batch | streaming
    workers: 1
    input:
      path: metrics.csv    # relative paths resolve against the config file
      format: csv          # csv | jsonl
      timestamp: timestamp # column names
      value: value
      metric: metric       # column holding the metric name ...
      metric_name: sales   # ... or a fixed name for every row
      dimensions: [country]
      aggregate: sum       # optional "All" slice per metric: sum | mean
      max_gap: 3           # longest NaN run repaired by interpolation
    stages:
      - preprocess:
          smoother: {name: rolling_median, window: 5}
          decompose: {method: stl, period: 24, component: residual}
      - detect:
          mode: explicit   # explicit | auto
          detector: {name: zscore, tau: 3.0, train_fraction: 0.3, params: {}}
          # or ensemble: {members: [...], quorum: 2}; mode auto takes an
          # optional mapping: path.yaml
      - rca:
          kind: cross_dimension    # cross_dimension | cross_metric
          target: "web_traffic{country=All}"
          candidates: [...]        # cross_metric only
          method: pearson
          lag_window: 0
          max_lag: 2
      - postprocess: {}
    sinks:
      - results_file: out/results.jsonl
      - rca_file: out/rca.jsonl
      - alert_webhook_stub: {file: out/alerts.jsonl}   # or {url: http://...}
    streaming:
      warmup: 100          # points buffered before the first fit
      context: 256         # trailing window for whole-series detectors
      refit: {threshold: 8.0, window: 200, check_every: 50}

Every schema violation raises a :class:`ConfigError` subclass whose message
starts with the offending line.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..detectors.registry import REGISTRY, DetectorConfig, EnsembleConfig
from ..exceptions import (
    AlertWithoutDetect,
    ConfigError,
    InvalidParams,
    ParseError,
    StageOrderViolation,
    UnknownDetector,
    UnreadableFile,
)
from ..preprocess.smoothers import SMOOTHERS
from ..rca import RcaMethod
from ..types import MetricKey

STAGE_ORDER = ("preprocess", "detect", "rca", "postprocess")
SINK_KINDS = ("results_file", "rca_file", "alert_webhook_stub")


# --- YAML with line numbers -------------------------------------------------


class _Lines:
    """Maps a path of keys/indices to the 1-based line where it appears."""

    def __init__(self):
        self.lines: dict[tuple, int] = {}

    def at(self, path: tuple) -> int | None:
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path[:-1]
        return self.lines.get((), None)


def _construct(node, path: tuple, lines: _Lines, loader):
    lines.lines.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k_node, v_node in node.value:
            line = k_node.start_mark.line + 1
            if not isinstance(k_node, yaml.ScalarNode):
                raise ParseError("mapping keys must be scalars", line)
            key = loader.construct_object(k_node)
            if key in out:
                raise ParseError(f"duplicate key {key!r}", line)
            lines.lines[path + (key,)] = line
            out[key] = _construct(v_node, path + (key,), lines, loader)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_construct(v, path + (i,), lines, loader) for i, v in enumerate(node.value)]
    return loader.construct_object(node)


def parse_yaml(text: str) -> tuple[object, _Lines]:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark is not None else None
        raise ParseError(f"invalid YAML: {exc.problem}", line) from None
    except yaml.YAMLError as exc:
        raise ParseError(f"invalid YAML: {exc}") from None
    lines = _Lines()
    if node is None:
        return {}, lines
    return _construct(node, (), lines, yaml.SafeLoader("")), lines


# --- config objects -------------------------------------------------------------


@dataclass(frozen=True)
class InputSpec:
    path: Path | None = None
    format: str = "csv"
    timestamp: str = "timestamp"
    value: str = "value"
    metric: str | None = None
    metric_name: str | None = None
    dimensions: tuple = ()
    label: str | None = None
    aggregate: str | None = None
    max_gap: int = 3


@dataclass(frozen=True)
class Stage:
    name: str
    options: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DetectStage:
    mode: str  # explicit | auto
    pipeline: DetectorConfig | EnsembleConfig | None = None
    mapping: dict | None = None


@dataclass(frozen=True)
class RcaStage:
    kind: str
    target: MetricKey
    candidates: tuple = ()
    method: RcaMethod = RcaMethod.PEARSON
    lag_window: int = 0
    max_lag: int = 2


@dataclass(frozen=True)
class Sink:
    kind: str
    path: Path | None = None
    url: str | None = None
    timeout: float = 5.0


@dataclass(frozen=True)
class RefitPolicy:
    threshold: float = 8.0
    window: int = 200
    check_every: int = 50


@dataclass(frozen=True)
class StreamingSpec:
    warmup: int | None = None
    context: int = 256
    refit: RefitPolicy | None = None


@dataclass(frozen=True)
class PipelineConfig:
    input: InputSpec
    stages: tuple
    sinks: tuple = ()
    seed: int = 0
    mode: str = "batch"
    workers: int = 1
    streaming: StreamingSpec = StreamingSpec()
    raw: dict = field(default_factory=dict, compare=False)

    def stage(self, name: str):
        for s in self.stages:
            if s.name == name:
                return s.options
        return None

    @property
    def stage_names(self) -> tuple:
        return tuple(s.name for s in self.stages)

    @property
    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, default=str).encode()
        return hashlib.sha256(canon).hexdigest()[:16]


# --- validation -----------------------------------------------------------------


class _Validator:
    def __init__(self, lines: _Lines, base: Path):
        self.lines = lines
        self.base = base

    def fail(self, path, message, cls=ConfigError):
        raise cls(message, self.lines.at(tuple(path)))

    def mapping(self, value, path, allowed, required=()):
        if value is None:
            value = {}
        if not isinstance(value, dict):
            self.fail(path, f"{_where(path)} must be a mapping")
        for k in value:
            if k not in allowed:
                self.fail(tuple(path) + (k,), f"unknown key {k!r} in {_where(path)}")
        for k in required:
            if k not in value:
                self.fail(path, f"{_where(path)} requires {k!r}")
        return value

    def int_(self, value, path, minimum=None):
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(path, f"{_where(path)} must be an integer")
        if minimum is not None and value < minimum:
            self.fail(path, f"{_where(path)} must be >= {minimum}")
        return value

    def num(self, value, path):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"{_where(path)} must be a number")
        return float(value)

    def str_(self, value, path, choices=None):
        if not isinstance(value, str):
            self.fail(path, f"{_where(path)} must be a string")
        if choices is not None and value not in choices:
            self.fail(path, f"{_where(path)} must be one of {list(choices)}, got {value!r}")
        return value

    def path_(self, value, path) -> Path:
        p = Path(self.str_(value, path))
        return p if p.is_absolute() else self.base / p

    def key(self, value, path) -> MetricKey:
        try:
            return MetricKey.parse(self.str_(value, path))
        except ValueError as exc:
            self.fail(path, str(exc))

    # sections

    def input(self, d, path=("input",)) -> InputSpec:
        d = self.mapping(d, path, {"path", "format", "timestamp", "value", "metric", "metric_name",
                                   "dimensions", "label", "aggregate", "max_gap"})
        dims = d.get("dimensions", []) or []
        if not isinstance(dims, list):
            self.fail(path + ("dimensions",), "input.dimensions must be a list")
        if "metric" in d and "metric_name" in d:
            self.fail(path, "input takes either 'metric' or 'metric_name', not both")
        return InputSpec(
            path=self.path_(d["path"], path + ("path",)) if "path" in d else None,
            format=self.str_(d.get("format", "csv"), path + ("format",), ("csv", "jsonl")),
            timestamp=self.str_(d.get("timestamp", "timestamp"), path + ("timestamp",)),
            value=self.str_(d.get("value", "value"), path + ("value",)),
            metric=self.str_(d["metric"], path + ("metric",)) if "metric" in d else None,
            metric_name=self.str_(d["metric_name"], path + ("metric_name",)) if "metric_name" in d else None,
            dimensions=tuple(self.str_(x, path + ("dimensions", i)) for i, x in enumerate(dims)),
            label=self.str_(d["label"], path + ("label",)) if "label" in d else None,
            aggregate=self.str_(d["aggregate"], path + ("aggregate",), ("sum", "mean"))
            if d.get("aggregate") is not None else None,
            max_gap=self.int_(d.get("max_gap", 3), path + ("max_gap",), 0),
        )

    def detector(self, d, path) -> DetectorConfig:
        d = self.mapping(d, path, {"name", "params", "tau", "train_fraction"}, ("name",))
        name = d["name"]
        if name not in REGISTRY:
            self.fail(path + ("name",), f"unknown detector {name!r}; known: {', '.join(REGISTRY)}",
                      UnknownDetector)
        try:
            return DetectorConfig.from_dict(d)
        except (InvalidParams, TypeError, ValueError) as exc:
            self.fail(path, str(exc))

    def ensemble(self, d, path) -> EnsembleConfig:
        d = self.mapping(d, path, {"members", "quorum", "name"}, ("members",))
        members = d["members"]
        if not isinstance(members, list) or not members:
            self.fail(path + ("members",), "ensemble.members must be a non-empty list")
        configs = tuple(self.detector(m, path + ("members", i)) for i, m in enumerate(members))
        quorum = self.int_(d.get("quorum", len(configs) // 2 + 1), path + ("quorum",), 1)
        try:
            return EnsembleConfig(configs, quorum, d.get("name", "majority_vote"))
        except InvalidParams as exc:
            self.fail(path, str(exc))

    def preprocess(self, d, path) -> dict:
        d = self.mapping(d, path, {"smoother", "decompose"})
        if "smoother" in d:
            sm = self.mapping(d["smoother"], path + ("smoother",), {"name", "window", "period", "members"},
                              ("name",))
            name = sm["name"]
            if name != "ensemble" and name not in SMOOTHERS:
                self.fail(path + ("smoother", "name"), f"unknown smoother {name!r}")
        if "decompose" in d:
            dec = self.mapping(d["decompose"], path + ("decompose",), {"method", "period", "component", "robust"},
                               ("method", "period"))
            self.str_(dec["method"], path + ("decompose", "method"), ("stl", "classical"))
            self.int_(dec["period"], path + ("decompose", "period"), 2)
            self.str_(dec.get("component", "residual"), path + ("decompose", "component"),
                      ("trend", "seasonal", "residual", "deseasonalized"))
        return d

    def detect(self, d, path) -> DetectStage:
        d = self.mapping(d, path, {"mode", "detector", "ensemble", "mapping"})
        mode = self.str_(d.get("mode", "explicit"), path + ("mode",), ("explicit", "auto"))
        if mode == "auto":
            if "detector" in d or "ensemble" in d:
                self.fail(path, "detect mode 'auto' selects detectors itself; remove detector/ensemble")
            mapping = None
            if "mapping" in d:
                from ..mselect import load_mapping

                mp = self.path_(d["mapping"], path + ("mapping",))
                try:
                    mapping = load_mapping(mp)
                except OSError as exc:
                    self.fail(path + ("mapping",), f"cannot read mapping: {exc}")
                except InvalidParams as exc:
                    self.fail(path + ("mapping",), str(exc))
            return DetectStage("auto", None, mapping)
        if "mapping" in d:
            self.fail(path + ("mapping",), "'mapping' applies only to detect mode 'auto'")
        if ("detector" in d) == ("ensemble" in d):
            self.fail(path, "explicit detect needs exactly one of 'detector' or 'ensemble'")
        if "detector" in d:
            return DetectStage("explicit", self.detector(d["detector"], path + ("detector",)))
        return DetectStage("explicit", self.ensemble(d["ensemble"], path + ("ensemble",)))

    def rca(self, d, path) -> RcaStage:
        d = self.mapping(d, path, {"kind", "target", "candidates", "method", "lag_window", "max_lag"},
                         ("target",))
        kind = self.str_(d.get("kind", "cross_dimension"), path + ("kind",),
                         ("cross_dimension", "cross_metric"))
        cands = d.get("candidates", []) or []
        if not isinstance(cands, list):
            self.fail(path + ("candidates",), "rca.candidates must be a list")
        if kind == "cross_metric" and not cands:
            self.fail(path, "cross_metric rca needs a non-empty 'candidates' list")
        if kind == "cross_dimension" and cands:
            self.fail(path + ("candidates",), "cross_dimension rca derives its candidates; remove the list")
        method = self.str_(d.get("method", "pearson"), path + ("method",), [m.value for m in RcaMethod])
        return RcaStage(
            kind,
            self.key(d["target"], path + ("target",)),
            tuple(self.key(c, path + ("candidates", i)) for i, c in enumerate(cands)),
            RcaMethod(method),
            self.int_(d.get("lag_window", 0), path + ("lag_window",), 0),
            self.int_(d.get("max_lag", 2), path + ("max_lag",), 1),
        )

    def sink(self, d, path) -> Sink:
        if not isinstance(d, dict) or len(d) != 1:
            self.fail(path, "each sink is a single-key mapping")
        (kind, value), = d.items()
        if kind not in SINK_KINDS:
            self.fail(path + (kind,), f"unknown sink {kind!r}; expected one of {list(SINK_KINDS)}")
        if kind != "alert_webhook_stub":
            return Sink(kind, self.path_(value, path + (kind,)))
        v = self.mapping(value, path + (kind,), {"file", "url", "timeout"})
        if ("file" in v) == ("url" in v):
            self.fail(path + (kind,), "alert_webhook_stub needs exactly one of 'file' or 'url'")
        timeout = self.num(v.get("timeout", 5.0), path + (kind, "timeout"))
        if "file" in v:
            return Sink(kind, self.path_(v["file"], path + (kind, "file")), timeout=timeout)
        return Sink(kind, url=self.str_(v["url"], path + (kind, "url")), timeout=timeout)

    def streaming(self, d, path=("streaming",)) -> StreamingSpec:
        d = self.mapping(d, path, {"warmup", "context", "refit"})
        refit = None
        if d.get("refit") is not None:
            r = self.mapping(d["refit"], path + ("refit",), {"threshold", "window", "check_every"})
            refit = RefitPolicy(
                self.num(r.get("threshold", 8.0), path + ("refit", "threshold")),
                self.int_(r.get("window", 200), path + ("refit", "window"), 8),
                self.int_(r.get("check_every", 50), path + ("refit", "check_every"), 1),
            )
        return StreamingSpec(
            self.int_(d["warmup"], path + ("warmup",), 2) if "warmup" in d else None,
            self.int_(d.get("context", 256), path + ("context",), 1),
            refit,
        )


def _where(path) -> str:
    parts = []
    for p in path:
        if isinstance(p, int):
            parts[-1] = f"{parts[-1]}[{p}]" if parts else f"[{p}]"
        else:
            parts.append(str(p))
    return ".".join(parts) or "config"


def build_config(raw, lines: _Lines | None = None, base: Path | None = None) -> PipelineConfig:
    """Validate an already-parsed config tree."""
    lines = lines or _Lines()
    v = _Validator(lines, base or Path.cwd())
    raw = v.mapping(raw, (), {"seed", "mode", "workers", "input", "stages", "sinks", "streaming"},
                    ("input", "stages"))
    seed = v.int_(raw.get("seed", 0), ("seed",), 0)
    mode = v.str_(raw.get("mode", "batch"), ("mode",), ("batch", "streaming"))
    workers = v.int_(raw.get("workers", 1), ("workers",), 1)
    inp = v.input(raw["input"])

    stages_raw = raw["stages"]
    if not isinstance(stages_raw, list) or not stages_raw:
        v.fail(("stages",), "stages must be a non-empty list")
    stages = []
    seen: list[str] = []
    for i, entry in enumerate(stages_raw):
        path = ("stages", i)
        if isinstance(entry, str):
            name, opts = entry, {}
        elif isinstance(entry, dict) and len(entry) == 1:
            (name, opts), = entry.items()
            path = path + (name,)
        else:
            v.fail(path, "each stage is a stage name or a single-key mapping")
        if name not in STAGE_ORDER:
            v.fail(path, f"unknown stage {name!r}; expected one of {list(STAGE_ORDER)}", StageOrderViolation)
        if name in seen:
            v.fail(path, f"stage {name!r} appears twice", StageOrderViolation)
        if seen and STAGE_ORDER.index(name) < STAGE_ORDER.index(seen[-1]):
            v.fail(path, f"stage {name!r} cannot follow {seen[-1]!r}; order is {' -> '.join(STAGE_ORDER)}",
                   StageOrderViolation)
        if name == "rca" and "detect" not in seen:
            v.fail(path, "the rca stage consumes detection verdicts and needs a detect stage before it",
                   StageOrderViolation)
        seen.append(name)
        parsed = {"preprocess": v.preprocess, "detect": v.detect, "rca": v.rca,
                  "postprocess": lambda d, p: v.mapping(d, p, set())}[name](opts, path)
        stages.append(Stage(name, parsed))

    sinks_raw = raw.get("sinks", []) or []
    if not isinstance(sinks_raw, list):
        v.fail(("sinks",), "sinks must be a list")
    sinks = tuple(v.sink(s, ("sinks", i)) for i, s in enumerate(sinks_raw))
    for i, s in enumerate(sinks):
        if s.kind == "alert_webhook_stub" and "detect" not in seen:
            v.fail(("sinks", i), "alerting requires a detect stage", AlertWithoutDetect)
        if s.kind == "rca_file" and "rca" not in seen:
            v.fail(("sinks", i), "rca_file sink requires an rca stage", StageOrderViolation)

    streaming = v.streaming(raw.get("streaming"))
    if mode == "streaming":
        for bad in ("preprocess", "rca"):
            if bad in seen:
                v.fail(("stages",), f"stage {bad!r} is batch-only; streaming supports detect and postprocess",
                       StageOrderViolation)
        if "detect" not in seen:
            v.fail(("stages",), "streaming mode needs a detect stage", StageOrderViolation)
    return PipelineConfig(inp, tuple(stages), sinks, seed, mode, workers, streaming, raw)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UnreadableFile(f"{path}: {exc}") from exc
    raw, lines = parse_yaml(text)
    return build_config(raw, lines, path.parent)


def parse_config(text: str, base=None) -> PipelineConfig:
    raw, lines = parse_yaml(text)
    return build_config(raw, lines, Path(base) if base is not None else None)
