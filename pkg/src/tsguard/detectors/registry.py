"""Detector registry and the configuration objects that reference it."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..exceptions import InvalidParams, UnknownDetector
from .base import BaseDetector
from .ml import IsolationForestWindowed, LOFWindowed, PCAReconstruction
from .rules import RateOfChange, SpectralResidual, StaticThreshold
from .statistical import (
    EWMAControl,
    GrubbsESD,
    HistogramRarity,
    IQRFences,
    MADZScore,
    Mahalanobis,
    PercentileBand,
    RateDeviation,
    RollingZScore,
    SeasonalESD,
    ZScore,
)

# Insertion order is the registry order used for tie-breaking.
REGISTRY: dict[str, type[BaseDetector]] = {
    "zscore": ZScore,
    "mad_zscore": MADZScore,
    "iqr": IQRFences,
    "grubbs_esd": GrubbsESD,
    "seasonal_esd": SeasonalESD,
    "ewma_control": EWMAControl,
    "percentile": PercentileBand,
    "rolling_zscore": RollingZScore,
    "rate_deviation": RateDeviation,
    "histogram_rarity": HistogramRarity,
    "mahalanobis": Mahalanobis,
    "iforest_windowed": IsolationForestWindowed,
    "lof_windowed": LOFWindowed,
    "pca_reconstruction": PCAReconstruction,
    "spectral_residual": SpectralResidual,
    "static_threshold": StaticThreshold,
    "rate_of_change": RateOfChange,
}

ENSEMBLE_NAME = "majority_vote"


def registry_index(name: str) -> int:
    return list(REGISTRY).index(name)


def param_names(name: str) -> set[str]:
    return set(REGISTRY[name]().get_params()) - {"threshold"}


@dataclass(frozen=True)
class DetectorConfig:
    """One detector: registry ``name``, constructor ``params``, threshold
    ``tau`` (``None`` selects the detector default) and the leading
    ``train_fraction`` of a series used for fitting."""

    name: str
    params: dict = field(default_factory=dict)
    tau: float | None = None
    train_fraction: float = 0.3

    def __post_init__(self):
        if self.name not in REGISTRY:
            raise UnknownDetector(f"unknown detector {self.name!r}")
        object.__setattr__(self, "params", dict(self.params))
        unknown = set(self.params) - param_names(self.name)
        if unknown:
            raise InvalidParams(f"{self.name} does not accept {sorted(unknown)}")
        if self.tau is not None and not math.isfinite(self.tau):
            raise InvalidParams("tau must be finite")
        if not 0 < self.train_fraction <= 1:
            raise InvalidParams("train_fraction must lie in (0, 1]")

    def build(self, seed: int | None = None) -> BaseDetector:
        params = dict(self.params)
        est_cls = REGISTRY[self.name]
        if seed is not None and "seed" in param_names(self.name) and "seed" not in params:
            params["seed"] = seed
        return est_cls(threshold=self.tau, **params)

    @property
    def threshold(self) -> float:
        return self.build().threshold_value

    @property
    def label(self) -> str:
        return self.name

    def to_dict(self) -> dict:
        out = {"name": self.name, "train_fraction": self.train_fraction}
        if self.params:
            out["params"] = dict(sorted(self.params.items()))
        if self.tau is not None:
            out["tau"] = self.tau
        return out

    @classmethod
    def from_dict(cls, d) -> "DetectorConfig":
        if isinstance(d, str):
            return cls(d)
        d = dict(d)
        name = d.pop("name", None)
        if name is None:
            raise InvalidParams("detector entry needs a 'name'")
        params = dict(d.pop("params", {}) or {})
        tau = d.pop("tau", None)
        train_fraction = d.pop("train_fraction", 0.3)
        if d:
            raise InvalidParams(f"unexpected detector keys {sorted(d)}")
        return cls(name, params, None if tau is None else float(tau), float(train_fraction))


@dataclass(frozen=True)
class EnsembleConfig:
    """Members vote; a point is anomalous when at least ``quorum`` agree."""

    members: tuple
    quorum: int = 1
    name: str = ENSEMBLE_NAME

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise InvalidParams("an ensemble needs at least one member")
        if not all(isinstance(m, DetectorConfig) for m in members):
            raise InvalidParams("ensemble members must be DetectorConfig instances")
        if not 1 <= self.quorum <= len(members):
            raise InvalidParams(f"quorum must lie in [1, {len(members)}], got {self.quorum}")
        object.__setattr__(self, "members", members)

    @property
    def label(self) -> str:
        return self.name

    def to_dict(self) -> dict:
        return {"members": [m.to_dict() for m in self.members], "quorum": self.quorum}

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleConfig":
        d = dict(d)
        members = tuple(DetectorConfig.from_dict(m) for m in d.pop("members", []) or [])
        quorum = int(d.pop("quorum", max(1, len(members) // 2 + 1)))
        name = d.pop("name", ENSEMBLE_NAME)
        if d:
            raise InvalidParams(f"unexpected ensemble keys {sorted(d)}")
        return cls(members, quorum, name)
