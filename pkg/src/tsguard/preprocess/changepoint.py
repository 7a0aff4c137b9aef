"""Univariate CUSUM and (multivariate) binary segmentation change points."""

from __future__ import annotations

import math

import numpy as np

from ..exceptions import InvalidParams
from ..types import ChangePoint, TimeSeries
from ..validation import as_matrix, as_values, check_min_length, sigma_floor


def _timestamps(s, n: int) -> np.ndarray:
    if isinstance(s, TimeSeries):
        return s.timestamps
    return np.arange(n, dtype=np.int64)


def cusum_changepoints(s, threshold: float, drift: float = 0.0,
                       baseline: int | None = None, standardize: bool = False) -> list[ChangePoint]:
    """Two-sided CUSUM.

    Each segment is centred on the mean of its first ``baseline`` points
    (default ``min(30, n // 4)``, at least 2), so ``threshold`` and
    ``drift`` are in the units of the data. With ``standardize`` the
    deviations are also divided by the baseline standard deviation and both
    parameters are in standard deviations instead. When
    either cumulative sum exceeds ``threshold`` a change point is emitted at
    the onset of the excursion (the first point after the sum last sat at
    zero); a new segment then starts there with fresh statistics.
    """
    x = as_values(s)
    n = x.size
    check_min_length(n, 2)
    if threshold <= 0:
        raise InvalidParams("threshold must be positive")
    if drift < 0:
        raise InvalidParams("drift must be non-negative")
    ts = _timestamps(s, n)
    if baseline is None:
        baseline = max(2, min(30, n // 4))
    out: list[ChangePoint] = []
    if math.isinf(threshold):
        return out
    start = 0
    while start + baseline < n:
        base = x[start:start + baseline]
        mu = float(base.mean())
        sd = float(sigma_floor(base.std(ddof=1), mu)) if standardize else 1.0
        gp = gn = 0.0
        onset_p = onset_n = start + baseline
        fired = False
        for i in range(start + baseline, n):
            z = (x[i] - mu) / sd
            gp = max(0.0, gp + z - drift)
            gn = max(0.0, gn - z - drift)
            if gp == 0.0:
                onset_p = i + 1
            if gn == 0.0:
                onset_n = i + 1
            if gp > threshold or gn > threshold:
                onset = onset_p if gp >= gn else onset_n
                out.append(ChangePoint(int(onset), int(ts[onset]), max(gp, gn)))
                start = onset
                fired = True
                break
        if not fired:
            break
    return out


def _segment_costs(c1, c2, a, ks, b):
    """Summed squared error of [a, k) and [k, b) for each split ``k``."""
    left_n = (ks - a)[:, None]
    right_n = (b - ks)[:, None]
    s1l = c1[ks] - c1[a]
    s2l = c2[ks] - c2[a]
    s1r = c1[b] - c1[ks]
    s2r = c2[b] - c2[ks]
    left = (s2l - s1l ** 2 / left_n).sum(axis=1)
    right = (s2r - s1r ** 2 / right_n).sum(axis=1)
    return left + right


def _best_split(c1, c2, a, b, min_size):
    if b - a < 2 * min_size:
        return None
    ks = np.arange(a + min_size, b - min_size + 1)
    whole = float(((c2[b] - c2[a]) - (c1[b] - c1[a]) ** 2 / (b - a)).sum())
    split = _segment_costs(c1, c2, a, ks, b)
    j = int(np.argmin(split))
    return whole - float(split[j]), int(ks[j])


def noise_scale(X: np.ndarray) -> np.ndarray:
    """Per-column noise sd from the MAD of first differences."""
    d = np.diff(X, axis=0)
    mad = np.median(np.abs(d - np.median(d, axis=0)), axis=0)
    sigma = 1.4826 * mad / math.sqrt(2.0)
    return sigma_floor(sigma, np.median(X, axis=0))


def binseg_changepoints(X, penalty: float, max_cps: int = 10, min_size: int = 2,
                        normalize: bool = True) -> list[ChangePoint]:
    """Binary segmentation under a Gaussian mean-shift cost.

    The cost of a segment is its within-segment sum of squares, summed over
    coordinates. With ``normalize`` each coordinate is first divided by a
    difference-based noise estimate, so ``penalty`` is in units of noise
    variance. The split with the largest cost reduction is taken while that
    reduction is at least ``penalty`` and fewer than ``max_cps`` points have
    been found.
    """
    mat = as_matrix(X)
    n = mat.shape[0]
    check_min_length(n, 4)
    if penalty < 0:
        raise InvalidParams("penalty must be non-negative")
    if max_cps < 0:
        raise InvalidParams("max_cps must be non-negative")
    ts = _timestamps(X, n)
    if normalize:
        mat = (mat - mat.mean(axis=0)) / noise_scale(mat)
    zeros = np.zeros((1, mat.shape[1]))
    c1 = np.vstack([zeros, np.cumsum(mat, axis=0)])
    c2 = np.vstack([zeros, np.cumsum(mat ** 2, axis=0)])

    segments = {(0, n): _best_split(c1, c2, 0, n, min_size)}
    found: list[ChangePoint] = []
    while len(found) < max_cps:
        candidates = [(v[0], -v[1], seg) for seg, v in segments.items() if v is not None]
        if not candidates:
            break
        gain, neg_k, seg = max(candidates)
        if gain < penalty or gain <= 0:
            break
        k = -neg_k
        found.append(ChangePoint(k, int(ts[k]), gain))
        a, b = seg
        del segments[seg]
        segments[(a, k)] = _best_split(c1, c2, a, k, min_size)
        segments[(k, b)] = _best_split(c1, c2, k, b, min_size)
    return sorted(found, key=lambda cp: cp.index)
