"""Anomaly detector registry, thresholding and majority-vote ensembles."""

from .api import (
    DetectorState,
    apply_threshold,
    detect,
    fit,
    majority_vote,
    run_config,
    run_detector,
    run_ensemble,
    score,
)
from .base import BaseDetector
from .registry import ENSEMBLE_NAME, REGISTRY, DetectorConfig, EnsembleConfig

__all__ = [
    "BaseDetector", "DetectorConfig", "DetectorState", "ENSEMBLE_NAME", "EnsembleConfig",
    "REGISTRY", "apply_threshold", "detect", "fit", "majority_vote", "run_config",
    "run_detector", "run_ensemble", "score",
]
