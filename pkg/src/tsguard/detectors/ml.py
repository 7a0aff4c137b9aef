"""Machine-learning detectors over sliding-window embeddings."""

from __future__ import annotations

import numpy as np
from sklearn.ensemble import IsolationForest
from sklearn.neighbors import LocalOutlierFactor

from ..validation import as_matrix, sigma_floor
from .base import BaseDetector, trailing_windows


class _WindowedDetector(BaseDetector):
    """Scores the window of ``window`` points ending at each sample."""

    def _min_length(self):
        return 2 * int(self.window)

    @property
    def replay_context(self):
        return int(self.window)

    def _validate_params(self):
        self._require(int(self.window) == self.window and self.window >= 1,
                      "window must be a positive integer")

    def _fit(self, x):
        self._fit_windows(trailing_windows(x, int(self.window))[int(self.window) - 1:])

    def _score(self, x, timestamps):
        return self._score_windows(trailing_windows(x, int(self.window)))


class IsolationForestWindowed(_WindowedDetector):
    """Isolation forest anomaly score (in ``(0, 1]``) of each trailing window."""

    default_threshold = 0.6

    def __init__(self, window=16, n_estimators=100, seed=0, threshold=None):
        self.window = window
        self.n_estimators = n_estimators
        self.seed = seed
        self.threshold = threshold

    def _fit_windows(self, W):
        self.forest_ = IsolationForest(
            n_estimators=int(self.n_estimators), random_state=self.seed
        ).fit(W)

    def _score_windows(self, W):
        return -self.forest_.score_samples(W)


class LOFWindowed(_WindowedDetector):
    """Local outlier factor of each trailing window against training windows."""

    default_threshold = 1.5

    def __init__(self, window=16, n_neighbors=20, threshold=None):
        self.window = window
        self.n_neighbors = n_neighbors
        self.threshold = threshold

    def _fit_windows(self, W):
        k = max(1, min(int(self.n_neighbors), W.shape[0] - 1))
        self.lof_ = LocalOutlierFactor(n_neighbors=k, novelty=True).fit(W)

    def _score_windows(self, W):
        return -self.lof_.score_samples(W)


class PCAReconstruction(BaseDetector):
    """Reconstruction error from the top principal components, relative to
    the training RMS error.

    Multivariate input is used as is; univariate input is embedded in
    trailing windows of width ``window``. The number of components is
    capped at one less than the dimension so the residual is never trivially
    zero.
    """

    multivariate = True

    def __init__(self, n_components=10, window=16, threshold=None):
        self.n_components = n_components
        self.window = window
        self.threshold = threshold

    def _embed(self, X):
        if X.shape[1] == 1:
            return trailing_windows(X[:, 0], int(self.window))
        return X

    @property
    def replay_context(self):
        return int(self.window)

    def _min_length(self):
        return max(2 * int(self.window), 4)

    def _validate_params(self):
        self._require(self.n_components >= 1, "n_components must be >= 1")
        self._require(self.window >= 2, "window must be >= 2")

    def _fit(self, X):
        W = self._embed(X)
        if X.shape[1] == 1:
            W = W[int(self.window) - 1:]
        d = W.shape[1]
        k = max(1, min(int(self.n_components), d - 1, W.shape[0] - 1))
        self.mean_ = W.mean(axis=0)
        _, _, vt = np.linalg.svd(W - self.mean_, full_matrices=False)
        self.components_ = vt[:k]
        err = self._errors(W)
        rms = float(np.sqrt(np.mean(err ** 2)))
        self.scale_ = float(sigma_floor(rms, np.abs(self.mean_).max()))

    def _errors(self, W):
        c = W - self.mean_
        recon = (c @ self.components_.T) @ self.components_
        return np.linalg.norm(c - recon, axis=1)

    def _score(self, X, timestamps):
        return self._errors(self._embed(X)) / self.scale_

    def _prepare(self, X):
        return as_matrix(X)

