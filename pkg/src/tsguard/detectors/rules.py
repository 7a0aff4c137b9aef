"""Spectral-residual saliency and rule-based detectors."""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import uniform_filter1d

from .base import BaseDetector


class SpectralResidual(BaseDetector):
    """Saliency map from the spectral residual of the mean-removed series.

    The log-amplitude spectrum minus its local average is transformed back
    with the original phases; a point's score is how far its saliency rises
    above the local average saliency, relative to that average. A series
    with no spectral content beyond the mean scores zero everywhere.
    """

    min_length = 8
    replay_context = None
    default_threshold = 1.0

    def __init__(self, amplitude_window=3, score_window=21, threshold=None):
        self.amplitude_window = amplitude_window
        self.score_window = score_window
        self.threshold = threshold

    def _validate_params(self):
        self._require(self.amplitude_window >= 1, "amplitude_window must be >= 1")
        self._require(self.score_window >= 1, "score_window must be >= 1")

    def _fit(self, x):
        pass

    def _score(self, x, timestamps):
        centered = x - x.mean()
        spectrum = np.fft.fft(centered)
        amp = np.abs(spectrum)
        scale = max(1.0, float(np.abs(x).max()))
        if amp.max() <= 1e-9 * scale * x.size:
            return np.zeros(x.size)
        log_amp = np.log(amp + 1e-8 * amp.max())
        residual = log_amp - uniform_filter1d(log_amp, int(self.amplitude_window), mode="nearest")
        saliency = np.abs(np.fft.ifft(np.exp(residual + 1j * np.angle(spectrum))))
        local = uniform_filter1d(saliency, int(self.score_window), mode="nearest")
        local = np.maximum(local, 1e-12 * max(1.0, float(saliency.max())))
        return np.maximum((saliency - local) / local, 0.0)


class StaticThreshold(BaseDetector):
    """Distance outside the configured ``[lower, upper]`` band."""

    min_length = 1
    default_threshold = 0.0

    def __init__(self, lower=-math.inf, upper=math.inf, threshold=None):
        self.lower = lower
        self.upper = upper
        self.threshold = threshold

    def _validate_params(self):
        self._require(self.lower <= self.upper, "lower must not exceed upper")

    def _fit(self, x):
        pass

    def _score(self, x, timestamps):
        lo, hi = float(self.lower), float(self.upper)
        return np.maximum(np.maximum(x - hi, lo - x), 0.0)

    def score_point(self, value, timestamp=None):
        return max(value - float(self.upper), float(self.lower) - value, 0.0)


class RateOfChange(BaseDetector):
    """``|dv/dt|`` in value units per second, divided by ``limit``.

    Without timestamps samples are taken to be one second apart.
    """

    min_length = 1
    replay_context = 2
    default_threshold = 1.0

    def __init__(self, limit=1.0, threshold=None):
        self.limit = limit
        self.threshold = threshold

    def _validate_params(self):
        self._require(self.limit > 0, "limit must be positive")

    def _fit(self, x):
        pass

    def _score(self, x, timestamps):
        out = np.zeros(x.size)
        if x.size < 2:
            return out
        if timestamps is None:
            dt = np.ones(x.size - 1)
        else:
            dt = np.diff(np.asarray(timestamps, dtype=np.int64)).astype(float) / 1000.0
        out[1:] = np.abs(np.diff(x)) / dt / float(self.limit)
        return out
