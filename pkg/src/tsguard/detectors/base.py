"""Estimator base class for anomaly detectors.

Detectors follow the scikit-learn estimator protocol: hyper-parameters are
constructor arguments (so ``get_params``/``set_params``/``clone`` work),
``fit`` learns from a training prefix and returns ``self``, and fitted
attributes end in an underscore. ``decision_function`` returns anomaly
scores where higher means more anomalous; ``predict`` thresholds them.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..exceptions import InvalidParams, ShapeMismatch
from ..types import TimeSeries
from ..validation import as_matrix, as_values, check_min_length


def apply_threshold_array(scores: np.ndarray, tau: float) -> np.ndarray:
    """Verdict 1 exactly where ``score > tau``; ties go to 0."""
    return (np.asarray(scores) > tau).astype(np.int8)


def trailing_windows(x: np.ndarray, width: int) -> np.ndarray:
    """``(n, width)`` windows ending at each point; the start is edge-padded."""
    padded = np.concatenate([np.full(width - 1, x[0]), x])
    return sliding_window_view(padded, width)


class BaseDetector(BaseEstimator):
    """Common fit/score/predict plumbing.

    Class attributes describe the detector to the orchestrator:

    ``min_length``
        smallest training set accepted by ``fit``.
    ``multivariate``
        whether 2-D input ``(n_samples, n_features)`` is accepted.
    ``replay_context``
        number of trailing points a score depends on besides the fitted
        state, or ``None`` when the score depends on the whole series. Only
        detectors with a context give identical results in streaming mode.
    ``default_threshold``
        tau used when a config does not set one.
    """

    min_length = 2
    multivariate = False
    replay_context: int | None = 1
    default_threshold = 3.0

    def _min_length(self) -> int:
        return type(self).min_length

    def _prepare(self, X):
        return as_matrix(X) if self.multivariate else as_values(X)

    def fit(self, X, y=None):
        data = self._prepare(X)
        check_min_length(data.shape[0], self._min_length(), "training data")
        self._validate_params()
        if self.multivariate:
            self.n_features_in_ = data.shape[1]
        self._fit(data)
        self.n_train_ = int(data.shape[0])
        return self

    def decision_function(self, X, timestamps=None) -> np.ndarray:
        check_is_fitted(self, "n_train_")
        if isinstance(X, TimeSeries) and timestamps is None:
            timestamps = X.timestamps
        data = self._prepare(X)
        if self.multivariate and data.shape[1] != self.n_features_in_:
            raise ShapeMismatch(
                f"fitted on {self.n_features_in_} features, got {data.shape[1]}"
            )
        if data.shape[0] == 0:
            return np.zeros(0)
        scores = np.asarray(self._score(data, timestamps), dtype=float)
        return np.nan_to_num(scores, nan=0.0, posinf=np.finfo(float).max)

    def predict(self, X, timestamps=None) -> np.ndarray:
        return apply_threshold_array(self.decision_function(X, timestamps), self.threshold_value)

    @property
    def threshold_value(self) -> float:
        tau = getattr(self, "threshold", None)
        return type(self).default_threshold if tau is None else float(tau)

    def score_point(self, value: float, timestamp=None) -> float | None:
        """Scalar fast path for point-wise detectors; ``None`` if unsupported."""
        return None

    def _validate_params(self) -> None:
        pass

    def _fit(self, data):
        raise NotImplementedError

    def _score(self, data, timestamps):
        raise NotImplementedError

    @staticmethod
    def _require(cond: bool, message: str) -> None:
        if not cond:
            raise InvalidParams(message)
