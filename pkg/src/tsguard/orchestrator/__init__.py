"""Config-driven batch and streaming pipelines, ingestion and sinks."""

from .config import InputSpec, PipelineConfig, load_config, parse_config
from .ingest import IngestResult, Record, ingest, read_records
from .pipeline import PipelineResult, run_pipeline
from .sinks import emit, emit_result
from .streaming import StreamProcessor, StreamVerdict, run_streaming

__all__ = [
    "IngestResult",
    "InputSpec",
    "PipelineConfig",
    "PipelineResult",
    "Record",
    "StreamProcessor",
    "StreamVerdict",
    "emit",
    "emit_result",
    "ingest",
    "load_config",
    "parse_config",
    "read_records",
    "run_pipeline",
    "run_streaming",
]
