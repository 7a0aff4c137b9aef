"""Command-line interface.

Exit codes: 0 success, 1 configuration error, 2 runtime error (including a
run where some keys failed).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .exceptions import ConfigError, TSGuardError
from .types import MetricKey

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("tsguard")


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=str))


def _with_seed(config, seed):
    from dataclasses import replace

    return config if seed is None else replace(config, seed=seed)


def cmd_run(args) -> int:
    from .orchestrator.config import load_config
    from .orchestrator.ingest import read_records
    from .orchestrator.pipeline import run_pipeline
    from .orchestrator.sinks import emit, emit_result
    from .orchestrator.streaming import StreamProcessor

    config = _with_seed(load_config(args.config), args.seed)
    if config.mode == "streaming":
        proc = StreamProcessor(config)
        out = list(proc.run(read_records(config.input)))
        rows = [(o.key, o.timestamp, o.value, o.score, o.verdict, o.source) for o in out]
        sink_errors = emit(config.sinks, rows)
        per_key: dict = {}
        for o in out:
            per_key[str(o.key)] = per_key.get(str(o.key), 0) + o.verdict
        _print_json({
            "mode": "streaming",
            "verdicts": len(out),
            "anomalies_per_key": dict(sorted(per_key.items())),
            "errors": [asdict(e) for e in proc.errors],
            "refits": [list(map(str, r)) for r in proc.refits],
            "sink_errors": sink_errors,
        })
        failed = any(e.kind not in ("OutOfOrderRecord", "DuplicateTimestamp") for e in proc.errors)
        return EXIT_RUNTIME if failed else EXIT_OK

    result = run_pipeline(config)
    emit_result(config.sinks, result)
    _print_json(result.summary())
    return EXIT_RUNTIME if result.errors else EXIT_OK


def _read_series(path):
    from .orchestrator.ingest import read_single_series

    return read_single_series(path)


def cmd_classify(args) -> int:
    from .mselect import classify_detail

    cls, trend, adf = classify_detail(_read_series(args.input))
    _print_json({"series_class": cls.value, "trend": asdict(trend),
                 "adf": asdict(adf) if adf is not None else None})
    return EXIT_OK


def cmd_recommend(args) -> int:
    from .mselect import load_mapping, recommend

    mapping = load_mapping(args.mapping) if args.mapping else None
    rec = recommend(_read_series(args.input), mapping)
    _print_json({
        "series_class": rec.series_class.value,
        "ensemble": rec.ensemble.to_dict(),
        "detrend": rec.detrend,
        "rationale": rec.rationale,
    })
    return EXIT_OK


def _benchmark_pipeline(path):
    """A pipeline config's explicit detect stage, or a file holding just
    ``detector:`` or ``ensemble:``."""
    from .orchestrator.config import _Lines, _Validator, load_config, parse_yaml

    raw, lines = parse_yaml(Path(path).read_text())
    if isinstance(raw, dict) and "stages" in raw:
        det = load_config(path).stage("detect")
        if det is None or det.mode != "explicit":
            raise ConfigError("benchmark needs an explicit detect stage")
        return det.pipeline
    v = _Validator(lines if isinstance(lines, _Lines) else _Lines(), Path(path).parent)
    raw = v.mapping(raw, (), {"detector", "ensemble"})
    if ("detector" in raw) == ("ensemble" in raw):
        raise ConfigError("benchmark config needs exactly one of 'detector' or 'ensemble'")
    if "detector" in raw:
        return v.detector(raw["detector"], ("detector",))
    return v.ensemble(raw["ensemble"], ("ensemble",))


def cmd_benchmark(args) -> int:
    from .evaluation import benchmark_run

    pipeline = _benchmark_pipeline(args.config)
    report = benchmark_run(args.data, pipeline, max_buffer=args.buffer,
                           seed=0 if args.seed is None else args.seed, workers=args.workers)
    sys.stdout.write(report.to_csv())
    print(report.summary(), file=sys.stderr)
    return EXIT_OK


def cmd_rca(args) -> int:
    from dataclasses import replace

    from .orchestrator.config import RcaStage, Stage, load_config
    from .orchestrator.pipeline import run_pipeline

    config = _with_seed(load_config(args.config), args.seed)
    if config.stage("detect") is None:
        raise ConfigError("rca needs a detect stage in the config")
    target = MetricKey.parse(args.target)
    existing = config.stage("rca")
    stage = replace(existing, target=target) if existing is not None else RcaStage("cross_dimension", target)
    stages = tuple(s for s in config.stages if s.name not in ("rca", "postprocess"))
    config = replace(config, stages=stages + (Stage("rca", stage),), mode="batch")
    result = run_pipeline(config)
    if "rca" in result.errors:
        print(result.errors["rca"], file=sys.stderr)
        return EXIT_RUNTIME
    for rep in result.rca_reports:
        for line in rep.to_lines():
            print(line)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tsguard", description="Time-series anomaly detection engine.")
    p.add_argument("--seed", type=int, default=None, help="seed for all randomness (overrides config)")
    p.add_argument("--log-level", default="WARNING",
                   choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a pipeline config")
    r.add_argument("--config", required=True)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("classify", help="classify a timestamp,value file as Stable/Unstable/Trend")
    c.add_argument("--input", required=True)
    c.set_defaults(func=cmd_classify)

    rec = sub.add_parser("recommend", help="recommend an ensemble for a series")
    rec.add_argument("--input", required=True)
    rec.add_argument("--mapping", default=None)
    rec.set_defaults(func=cmd_recommend)

    b = sub.add_parser("benchmark", help="evaluate a detector over labelled files")
    b.add_argument("--data", required=True)
    b.add_argument("--config", required=True)
    b.add_argument("--buffer", type=int, default=0, help="maximum VUS buffer length")
    b.add_argument("--workers", type=int, default=1)
    b.set_defaults(func=cmd_benchmark)

    a = sub.add_parser("rca", help="root cause analysis for one target key")
    a.add_argument("--config", required=True)
    a.add_argument("--target", required=True, help='e.g. "web_traffic{country=All}"')
    a.set_defaults(func=cmd_rca)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TSGuardError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
