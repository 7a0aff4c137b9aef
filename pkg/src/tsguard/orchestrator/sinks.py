"""Output sinks: results file, RCA file and the alert stub.

Results and alerts are line-delimited JSON with sorted keys, so identical
runs produce identical bytes. Sink failures are collected and returned,
never raised: an unreachable webhook must not lose the results file.
"""

from __future__ import annotations

import json
import logging
import threading
import urllib.error
import urllib.request
from pathlib import Path

from ..exceptions import SinkUnavailable
from .config import Sink

log = logging.getLogger(__name__)

_FILE_LOCKS: dict[str, threading.Lock] = {}
_LOCKS_GUARD = threading.Lock()


def _lock_for(path: Path) -> threading.Lock:
    with _LOCKS_GUARD:
        return _FILE_LOCKS.setdefault(str(path.resolve()), threading.Lock())


def result_line(key, ts, value, score, verdict, source) -> str:
    return json.dumps({"key": str(key), "ts": ts, "value": value, "score": score,
                       "verdict": verdict, "source": source}, sort_keys=True)


def alert_record(key, ts, value, score, source) -> dict:
    return {"key": str(key), "ts": ts, "value": value, "score": score, "source": source}


def _write_lines(path: Path, lines) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with _lock_for(path), path.open("w") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def post_json(url: str, payload: dict, timeout: float) -> None:
    req = urllib.request.Request(url, data=json.dumps(payload, sort_keys=True).encode(),
                                 headers={"Content-Type": "application/json"}, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            if resp.status >= 300:
                raise SinkUnavailable(f"{url}: HTTP {resp.status}")
    except (urllib.error.URLError, OSError, ValueError) as exc:
        if isinstance(exc, SinkUnavailable):
            raise
        raise SinkUnavailable(f"{url}: {exc}") from exc


def _alerts(sink: Sink, rows) -> None:
    records = [alert_record(k, ts, v, s, src) for k, ts, v, s, verdict, src in rows if verdict == 1]
    if sink.path is not None:
        _write_lines(sink.path, (json.dumps(r, sort_keys=True) for r in records))
        return
    # One POST per anomalous point; stop at the first failure rather than
    # waiting out the timeout once per record.
    for r in records:
        post_json(sink.url, r, sink.timeout)


def emit(sinks, rows, rca_lines=()) -> list[str]:
    """Write every sink. ``rows`` are ``(key, ts, value, score, verdict,
    source)`` tuples. Returns the list of sink error messages."""
    rows = list(rows)
    errors = []
    for sink in sinks:
        try:
            if sink.kind == "results_file":
                _write_lines(sink.path, (result_line(*r) for r in rows))
            elif sink.kind == "rca_file":
                _write_lines(sink.path, rca_lines)
            else:
                _alerts(sink, rows)
        except (SinkUnavailable, OSError) as exc:
            msg = f"{sink.kind}: {exc}"
            log.warning("sink failed: %s", msg)
            errors.append(msg)
    return errors


def emit_result(sinks, result) -> list[str]:
    """Emit a batch :class:`PipelineResult` and record sink errors on it."""
    rca_lines = [line for rep in result.rca_reports for line in rep.to_lines()]
    errors = emit(sinks, result.rows(), rca_lines)
    result.sink_errors.extend(errors)
    return errors
