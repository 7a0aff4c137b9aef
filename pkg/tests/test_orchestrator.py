import json
import random
from pathlib import Path

import numpy as np
import pytest

from tsguard.detectors import DetectorConfig, REGISTRY, run_detector
from tsguard.exceptions import (
    AlertWithoutDetect,
    ConfigError,
    ParseError,
    SchemaMismatch,
    StageOrderViolation,
    UnknownDetector,
    UnreadableFile,
)
from tsguard.orchestrator import (
    InputSpec,
    StreamProcessor,
    emit_result,
    ingest,
    load_config,
    parse_config,
    run_pipeline,
)
from tsguard.orchestrator.ingest import parse_timestamp
from tsguard.types import MetricKey, TimeSeries

GOLDEN = Path(__file__).parent / "golden"
T0 = 1_700_000_000_000
USA = MetricKey("web_traffic", (("country", "USA"),))
UK = MetricKey("web_traffic", (("country", "UK"),))
ALL = MetricKey("web_traffic", (("country", "All"),))


def traffic_rows(n=200, spike_at=180, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    usa = 100 + rng.normal(size=n)
    usa[spike_at] += 12
    uk = 50 + rng.normal(size=n)
    for i in range(n):
        rows.append((T0 + i * 60_000, "USA", round(float(usa[i]), 6)))
        rows.append((T0 + i * 60_000, "UK", round(float(uk[i]), 6)))
    return rows


def write_csv(path, rows):
    with open(path, "w") as fh:
        fh.write("timestamp,country,value\n")
        for ts, c, v in rows:
            fh.write(f"{ts},{c},{v}\n")


BATCH_CONFIG = """\
seed: 7
workers: {workers}
input:
  path: data.csv
  metric_name: web_traffic
  dimensions: [country]
stages:
  - preprocess:
      smoother: {{name: rolling_median, window: 1}}
  - detect:
      detector: {{name: zscore, tau: 5.0, train_fraction: 0.5}}
  - postprocess
sinks:
  - results_file: out/results.jsonl
  - alert_webhook_stub: {{file: out/alerts.jsonl}}
"""


@pytest.fixture
def workspace(tmp_path):
    write_csv(tmp_path / "data.csv", traffic_rows())
    return tmp_path


def write_config(dir_, text, name="config.yaml"):
    p = Path(dir_) / name
    p.write_text(text)
    return p


# --- config -----------------------------------------------------------------


def test_minimal_config_is_valid():
    cfg = parse_config("input: {path: a.csv}\nstages:\n  - detect:\n      detector: {name: zscore}\n")
    assert cfg.stage_names == ("detect",)
    assert cfg.stage("detect").pipeline == DetectorConfig("zscore")


@pytest.mark.parametrize("text,exc,line", [
    ("input: {path: a.csv}\nstages: [postprocess]\nsinks:\n  - alert_webhook_stub: {file: x}\n",
     AlertWithoutDetect, 4),
    ("input: {path: a.csv}\nstages:\n  - detect:\n      detector: {name: nope}\n", UnknownDetector, 4),
    ("input: {path: a.csv}\nstages: [rca]\n", StageOrderViolation, 2),
    ("input: {path: a.csv}\nstages:\n  - detect:\n      detector: {name: zscore}\n      bogus: 1\n",
     ConfigError, 5),
    ("input: {path: a.csv}\nstages: [postprocess, detect]\n", StageOrderViolation, 2),
    ("input: {path: a.csv}\ninput: {path: b.csv}\n", ParseError, 2),
    ("seed: 1\nmode: : batch\n", ParseError, 2),
])
def test_config_errors_carry_line_numbers(text, exc, line):
    with pytest.raises(exc) as info:
        parse_config(text)
    assert str(info.value).startswith(f"line {line}:")


def test_streaming_rejects_batch_only_stages():
    with pytest.raises(StageOrderViolation):
        parse_config("mode: streaming\ninput: {path: a.csv}\nstages:\n  - preprocess: {}\n"
                     "  - detect:\n      detector: {name: zscore}\n")


def test_config_hash_ignores_formatting():
    a = parse_config("input: {path: a.csv}\nstages:\n  - detect:\n      detector: {name: zscore}\n")
    b = parse_config("stages:\n- detect: {detector: {name: zscore}}\ninput:\n  path: a.csv\n")
    assert a.config_hash == b.config_hash


def test_missing_config_file(tmp_path):
    with pytest.raises(UnreadableFile):
        load_config(tmp_path / "absent.yaml")


# --- ingest -----------------------------------------------------------------


def test_ingest_groups_by_dimension(workspace):
    spec = InputSpec(path=workspace / "data.csv", metric_name="web_traffic", dimensions=("country",),
                     aggregate="sum")
    res = ingest(spec)
    assert set(res.series) == {USA, UK, ALL}
    rows = traffic_rows()
    assert len(res.series[USA]) == sum(1 for r in rows if r[1] == "USA")
    np.testing.assert_allclose(res.series[ALL].values, res.series[USA].values + res.series[UK].values)


def test_shuffled_rows_give_same_collection(workspace):
    rows = traffic_rows()
    random.Random(0).shuffle(rows)
    write_csv(workspace / "shuffled.csv", rows)
    spec = InputSpec(path=workspace / "data.csv", metric_name="web_traffic", dimensions=("country",))
    a, b = ingest(spec), ingest(spec, workspace / "shuffled.csv")
    assert set(a.series) == set(b.series)
    for k in a.series:
        assert np.array_equal(a.series[k].timestamps, b.series[k].timestamps)
        assert np.array_equal(a.series[k].values, b.series[k].values)


def test_missing_value_column(tmp_path):
    (tmp_path / "x.csv").write_text("timestamp,country\n1,USA\n")
    with pytest.raises(SchemaMismatch):
        ingest(InputSpec(path=tmp_path / "x.csv", dimensions=("country",)))


def test_duplicate_timestamp_isolated_to_key(tmp_path):
    (tmp_path / "x.csv").write_text("timestamp,country,value\n1,USA,1\n1,USA,2\n1,UK,3\n2,UK,4\n")
    res = ingest(InputSpec(path=tmp_path / "x.csv", metric_name="m", dimensions=("country",)))
    assert MetricKey("m", (("country", "UK"),)) in res.series
    assert MetricKey("m", (("country", "USA"),)) in res.errors


def test_jsonl_and_iso_timestamps(tmp_path):
    lines = [{"timestamp": "2024-01-01T00:00:00Z", "value": 1.0},
             {"timestamp": "2024-01-01T00:01:00", "value": 2.0}]
    (tmp_path / "m.jsonl").write_text("\n".join(json.dumps(l) for l in lines) + "\n")
    res = ingest(InputSpec(path=tmp_path / "m.jsonl", format="jsonl"))
    (key, s), = res.series.items()
    assert key == MetricKey("m")
    assert s.timestamps.tolist() == [1704067200000, 1704067260000]
    assert parse_timestamp("2024-01-01T01:00:00+01:00") == 1704067200000


# --- batch pipeline -----------------------------------------------------------


def test_pipeline_flags_only_the_spike_key(workspace):
    cfg = load_config(write_config(workspace, BATCH_CONFIG.format(workers=1)))
    result = run_pipeline(cfg)
    assert result.errors == {}
    assert result.aggregates["anomalies_per_key"] == {str(UK): 0, str(USA): 1}
    standalone = run_detector(DetectorConfig("zscore", tau=5.0, train_fraction=0.5),
                              result.keys[USA].series, USA, 7)[1]
    assert np.array_equal(result.keys[USA].verdicts.verdicts, standalone.verdicts)
    assert int(np.flatnonzero(standalone.verdicts)[0]) == 180


def test_pipeline_byte_identical_across_runs_and_workers(workspace):
    outputs = []
    for workers in (1, 8, 1):
        d = workspace / f"w{workers}_{len(outputs)}"
        d.mkdir()
        write_csv(d / "data.csv", traffic_rows())
        cfg = load_config(write_config(d, BATCH_CONFIG.format(workers=workers)))
        emit_result(cfg.sinks, run_pipeline(cfg))
        outputs.append(((d / "out/results.jsonl").read_bytes(), (d / "out/alerts.jsonl").read_bytes()))
    assert outputs[0] == outputs[1] == outputs[2]


def test_failing_key_does_not_affect_others(workspace):
    cfg = load_config(write_config(workspace, BATCH_CONFIG.format(workers=4)))
    base = run_pipeline(cfg)
    data = dict((k, kr.series) for k, kr in base.keys.items())
    short = MetricKey("web_traffic", (("country", "FR"),))
    data[short] = TimeSeries(np.arange(3) * 60_000 + T0, [1.0, 2.0, 3.0])
    mixed = run_pipeline(cfg, data)
    assert str(short) in mixed.errors and mixed.errors[str(short)].startswith("detect: SeriesTooShort")
    for k in (USA, UK):
        assert np.array_equal(mixed.keys[k].verdicts.verdicts, base.keys[k].verdicts.verdicts)
        assert np.array_equal(mixed.keys[k].scores.scores, base.keys[k].scores.scores)


def test_auto_detect_records_class(workspace):
    text = BATCH_CONFIG.format(workers=1).replace(
        "detector: {name: zscore, tau: 5.0, train_fraction: 0.5}", "mode: auto")
    result = run_pipeline(load_config(write_config(workspace, text)))
    assert result.errors == {}
    assert set(result.metadata["series_class"].values()) <= {"Stable", "Unstable", "Trend"}
    assert all(kr.source.startswith("auto:") for kr in result.keys.values())


def test_rca_stage(workspace):
    text = BATCH_CONFIG.format(workers=1).replace("  - postprocess\n", (
        "  - rca:\n      target: \"web_traffic{country=All}\"\n  - postprocess\n"))
    text = text.replace("  dimensions: [country]\n", "  dimensions: [country]\n  aggregate: sum\n")
    text += "  - rca_file: out/rca.jsonl\n"
    cfg = load_config(write_config(workspace, text))
    result = run_pipeline(cfg)
    emit_result(cfg.sinks, result)
    lines = [json.loads(l) for l in (workspace / "out/rca.jsonl").read_text().splitlines()]
    assert lines[0]["candidate"] == str(USA) and lines[0]["link"]


# --- sinks ------------------------------------------------------------------


def test_zero_anomalies_writes_empty_alerts(workspace):
    text = BATCH_CONFIG.format(workers=1).replace("tau: 5.0", "tau: 1000.0")
    cfg = load_config(write_config(workspace, text))
    result = run_pipeline(cfg)
    assert emit_result(cfg.sinks, result) == []
    assert (workspace / "out/results.jsonl").read_text().count("\n") == 400
    assert (workspace / "out/alerts.jsonl").read_text() == ""


def test_unreachable_webhook_is_recorded(workspace):
    text = BATCH_CONFIG.format(workers=1).replace(
        "{file: out/alerts.jsonl}", "{url: \"http://127.0.0.1:9/hook\", timeout: 1}")
    cfg = load_config(write_config(workspace, text))
    result = run_pipeline(cfg)
    errors = emit_result(cfg.sinks, result)
    assert len(errors) == 1 and errors[0].startswith("alert_webhook_stub")
    assert result.sink_errors == errors
    assert (workspace / "out/results.jsonl").exists()


def test_golden_results_file(workspace):
    cfg = load_config(write_config(workspace, BATCH_CONFIG.format(workers=2)))
    emit_result(cfg.sinks, run_pipeline(cfg))
    produced = (workspace / "out/results.jsonl").read_bytes()
    assert produced == (GOLDEN / "results.jsonl").read_bytes()


# --- streaming --------------------------------------------------------------


STREAM_CONFIG = """\
seed: 0
mode: streaming
input: {{path: data.csv, metric_name: web_traffic, dimensions: [country]}}
stages:
  - detect:
      detector: {{name: {name}, train_fraction: 0.5{extra}}}
streaming: {{warmup: 100}}
"""

REPLAY_EXACT = ["zscore", "mad_zscore", "iqr", "percentile", "rolling_zscore", "rate_deviation",
                "histogram_rarity", "iforest_windowed", "lof_windowed", "static_threshold",
                "rate_of_change"]


def _records(series):
    recs = []
    for key, s in series.items():
        recs += [(key, int(t), float(v)) for t, v in zip(s.timestamps, s.values)]
    return sorted(recs, key=lambda r: (r[1], str(r[0])))


@pytest.mark.parametrize("name", REPLAY_EXACT)
def test_streaming_replays_batch(workspace, name):
    extra = ", params: {upper: 110.0}" if name == "static_threshold" else ""
    cfg = parse_config(STREAM_CONFIG.format(name=name, extra=extra), base=workspace)
    data = ingest(cfg.input).series
    proc = StreamProcessor(cfg)
    out = list(proc.run(_records(data)))
    assert proc.errors == []
    det = cfg.stage("detect").pipeline
    for key, s in data.items():
        scores, verdicts = run_detector(det, s, key, 0)
        streamed = [o for o in out if o.key == key]
        assert len(streamed) == 100
        assert [o.verdict for o in streamed] == verdicts.verdicts[100:].tolist()
        np.testing.assert_allclose([o.score for o in streamed], scores.scores[100:], rtol=1e-9, atol=1e-9)


def test_streaming_out_of_order_and_short_keys(workspace):
    cfg = parse_config(STREAM_CONFIG.format(name="zscore", extra=""), base=workspace)
    proc = StreamProcessor(cfg)
    a, b = MetricKey("a"), MetricKey("b")
    recs = [(a, T0 + i, float(i % 7)) for i in range(150)]
    recs.insert(120, (a, T0 + 5, 1.0))
    recs += [(b, T0 + i, 1.0) for i in range(20)]  # never warms up
    out = list(proc.run(recs))
    assert len([o for o in out if o.key == a]) == 50
    assert not [o for o in out if o.key == b]
    assert [e.kind for e in proc.errors] == ["OutOfOrderRecord"]


def test_streaming_refits_after_level_shift():
    text = STREAM_CONFIG.format(name="zscore", extra=", tau: 4.0").replace(
        "streaming: {warmup: 100}",
        "streaming: {warmup: 100, refit: {threshold: 8, window: 100, check_every: 20}}")
    cfg = parse_config(text)
    rng = np.random.default_rng(0)
    x = np.r_[rng.normal(size=300), 20 + rng.normal(size=500)]
    key = MetricKey("m")
    proc = StreamProcessor(cfg)
    out = list(proc.run((key, T0 + i, float(v)) for i, v in enumerate(x)))
    assert proc.refits, "level shift should trigger a refit"
    _, ts, start = proc.refits[0]
    assert abs(start - 300) <= 10
    tail = [o.verdict for o in out[-200:]]
    assert sum(tail) <= 2
