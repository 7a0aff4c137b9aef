"""Additive decompositions (classical moving-average, STL) and robust PCA."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ..exceptions import InvalidParams, NonConvergence, SeriesTooShort
from ..types import TimeSeries
from ..validation import as_matrix, check_positive_int


@dataclass(frozen=True)
class Decomposition:
    trend: TimeSeries
    seasonal: TimeSeries
    residual: TimeSeries


@dataclass(frozen=True, eq=False)
class RpcaResult:
    low_rank: np.ndarray
    sparse: np.ndarray
    converged: bool
    iterations: int
    objective: list = field(default_factory=list)
    residual: list = field(default_factory=list)

    @property
    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.low_rank))


def _as_series(s) -> TimeSeries:
    return s if isinstance(s, TimeSeries) else TimeSeries.from_values(s)


def _check_period(n: int, period: int) -> int:
    period = check_positive_int(period, "period", minimum=2)
    if n < 2 * period:
        raise SeriesTooShort(f"need at least {2 * period} points for period {period}, got {n}")
    return period


def _extrapolate(trend: np.ndarray, lo: int, hi: int, k: int) -> None:
    """Fill ``trend[:lo]`` and ``trend[hi:]`` by least-squares lines through
    the ``k`` nearest defined values at each end. Modifies in place."""
    idx = np.arange(trend.size)
    if lo > 0:
        fit = np.polyfit(idx[lo:lo + k], trend[lo:lo + k], 1)
        trend[:lo] = np.polyval(fit, idx[:lo])
    if hi < trend.size:
        fit = np.polyfit(idx[hi - k:hi], trend[hi - k:hi], 1)
        trend[hi:] = np.polyval(fit, idx[hi:])


def classical_decompose(s, period: int) -> Decomposition:
    """Moving-average trend plus phase-mean seasonal component.

    Even periods use the 2 x p filter (half weights at both ends). The trend
    is undefined for the first and last ``period // 2`` points; those are
    linearly extrapolated from the nearest ``period`` defined values.
    """
    s = _as_series(s)
    x = s.values
    n = x.size
    period = _check_period(n, period)
    half = period // 2
    if period % 2:
        weights = np.full(period, 1.0 / period)
    else:
        weights = np.r_[0.5, np.ones(period - 1), 0.5] / period
    trend = np.full(n, np.nan)
    trend[half:n - half] = np.convolve(x, weights, mode="valid")
    interior = slice(half, n - half)

    detrended = x - trend
    phase_means = np.array(
        [np.nanmean(detrended[interior][(np.arange(half, n - half) % period) == j])
         for j in range(period)]
    )
    phase_means -= phase_means.mean()
    seasonal = phase_means[np.arange(n) % period]

    _extrapolate(trend, half, n - half, min(period, n - 2 * half))
    residual = x - trend - seasonal
    return Decomposition(s.with_values(trend), s.with_values(seasonal), s.with_values(residual))


def _next_odd(x: float) -> int:
    k = int(math.ceil(x))
    return k if k % 2 else k + 1


def _loess(y: np.ndarray, q: int, positions: np.ndarray, rw: np.ndarray | None = None) -> np.ndarray:
    """Degree-1 loess of ``y`` (sampled at 0..n-1) evaluated at ``positions``.

    Uses the ``q`` nearest samples with tricube weights; when ``q`` exceeds
    ``n`` the bandwidth is widened by ``(q - n) // 2``.
    """
    n = y.size
    positions = np.asarray(positions, dtype=float)
    qq = min(q, n)
    lo = np.clip(np.rint(positions).astype(int) - qq // 2, 0, n - qq)
    idx = lo[:, None] + np.arange(qq)
    dist = np.abs(idx - positions[:, None])
    h = np.maximum(positions - lo, lo + qq - 1 - positions)
    if q > n:
        h = h + (q - n) // 2
    h = np.maximum(h, 1e-12)[:, None]
    r = dist / h
    w = np.where(r <= 0.999, (1.0 - np.minimum(r, 1.0) ** 3) ** 3, 0.0)
    w = np.where(r <= 0.001, 1.0, w)
    if rw is not None:
        w = w * rw[idx]
    total = w.sum(axis=1)
    ok = total > 0
    w = np.divide(w, total[:, None], out=np.zeros_like(w), where=ok[:, None])
    a = (w * idx).sum(axis=1)
    b = (w * (idx - a[:, None]) ** 2).sum(axis=1)
    use_slope = np.sqrt(b) > 0.001 * (n - 1)
    slope_w = np.divide(
        (idx - a[:, None]) * (positions - a)[:, None], b[:, None],
        out=np.zeros_like(w), where=(use_slope & ok)[:, None],
    )
    w = w * (1.0 + slope_w)
    fitted = (w * y[idx]).sum(axis=1)
    fallback = y[np.clip(np.rint(positions).astype(int), 0, n - 1)]
    return np.where(ok, fitted, fallback)


def _low_pass(c: np.ndarray, period: int) -> np.ndarray:
    out = np.convolve(c, np.full(period, 1.0 / period), mode="valid")
    out = np.convolve(out, np.full(period, 1.0 / period), mode="valid")
    return np.convolve(out, np.full(3, 1.0 / 3), mode="valid")


def _stl_inner(y, period, ns, nt, nl, rw, trend):
    n = y.size
    detrended = y - trend
    cycle = np.empty(n + 2 * period)
    for j in range(period):
        sub = detrended[j::period]
        m = sub.size
        cycle[j::period][: m + 2] = _loess(sub, ns, np.arange(-1, m + 1), rw[j::period])
    low = _loess(_low_pass(cycle, period), nl, np.arange(n))
    seasonal = cycle[period:period + n] - low
    trend = _loess(y - seasonal, nt, np.arange(n), rw)
    return seasonal, trend


def _robustness_weights(resid: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Bisquare weights with scale ``6 * median|resid|``.

    ``floor`` bounds the median from below. Without it a near-exact fit
    (noise-free input) has a median residual around 1e-15 and every point
    touched by an outlier gets weight zero, which stops the outer loop
    from settling.
    """
    h = 6.0 * max(float(np.median(np.abs(resid))), floor)
    if h == 0:
        return np.ones_like(resid)
    u = np.abs(resid) / h
    w = np.where(u < 1, (1 - u ** 2) ** 2, 0.0)
    w[u <= 0.001] = 1.0
    return w


def _stl(y, period, inner_iters, robust, seasonal_span, max_outer, tol=0.01):
    n = y.size
    ns = _next_odd(max(seasonal_span, 3))
    nl = _next_odd(period)
    nt = _next_odd(1.5 * period)
    rw = np.ones(n)
    trend = np.zeros(n)
    seasonal = np.zeros(n)
    scale = 1e-12 * max(1.0, float(np.max(np.abs(y))))
    outer = max_outer if robust else 1
    converged = not robust
    for k in range(outer):
        prev_s, prev_t = seasonal, trend
        for _ in range(inner_iters):
            seasonal, trend = _stl_inner(y, period, ns, nt, nl, rw, trend)
        if robust:
            if k > 0:
                ds = np.max(np.abs(seasonal - prev_s)) / (np.ptp(seasonal) + scale)
                dt = np.max(np.abs(trend - prev_t)) / (np.ptp(trend) + scale)
                if ds < tol and dt < tol:
                    converged = True
                    break
            rw = _robustness_weights(y - trend - seasonal, 1e-3 * float(np.ptp(y)))
    return trend, seasonal, converged


def stl_decompose(s, period: int, inner_iters: int | None = None, robust: bool = False,
                  seasonal_span: int = 7, max_outer: int = 10) -> Decomposition:
    """Seasonal-trend decomposition by iterated loess.

    With ``robust`` the outer loop reweights points by bisquare weights of
    the residual and stops once trend and seasonal change by less than 1%
    of their range; exceeding ``max_outer`` passes raises NonConvergence.
    """
    dec, converged = stl_with_status(s, period, inner_iters, robust, seasonal_span, max_outer)
    if not converged:
        raise NonConvergence(f"robust STL did not converge in {max_outer} outer iterations")
    return dec


def stl_with_status(s, period, inner_iters=None, robust=False, seasonal_span=7, max_outer=10):
    """Like :func:`stl_decompose` but returns ``(decomposition, converged)``."""
    s = _as_series(s)
    y = s.values
    period = _check_period(y.size, period)
    if inner_iters is None:
        inner_iters = 1 if robust else 2
    inner_iters = check_positive_int(inner_iters, "inner_iters")
    trend, seasonal, converged = _stl(y, period, inner_iters, robust, seasonal_span, max_outer)
    resid = y - trend - seasonal
    return Decomposition(s.with_values(trend), s.with_values(seasonal), s.with_values(resid)), converged


def _shrink(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _svt(x, t, max_rank=None):
    u, sv, vt = np.linalg.svd(x, full_matrices=False)
    sv = np.maximum(sv - t, 0.0)
    if max_rank is not None:
        sv[max_rank:] = 0.0
    k = int(np.count_nonzero(sv))
    return (u[:, :k] * sv[:k]) @ vt[:k], float(sv.sum())


def rpca_decompose(X, lam: float | None = None, tol: float = 1e-7, max_iters: int = 1000,
                   max_rank: int | None = None, rho: float = 1.5) -> RpcaResult:
    """Principal component pursuit by the inexact augmented Lagrangian method.

    Splits ``X`` into low-rank ``L`` and sparse ``S`` minimising
    ``||L||_* + lam * ||S||_1`` subject to ``L + S = X``. Stops when
    ``||X - L - S||_F / ||X||_F <= tol``. On hitting ``max_iters`` the last
    iterate is returned with ``converged=False``.
    """
    X = as_matrix(X)
    if not np.all(np.isfinite(X)):
        raise InvalidParams("RPCA input must be finite")
    max_iters = check_positive_int(max_iters, "max_iters")
    n, m = X.shape
    if lam is None:
        lam = 1.0 / math.sqrt(max(n, m))
    if lam <= 0:
        raise InvalidParams("lam must be positive")
    norm_fro = np.linalg.norm(X)
    L = np.zeros_like(X)
    S = np.zeros_like(X)
    if norm_fro == 0:
        return RpcaResult(L, S, True, 0, [0.0], [0.0])

    spectral = np.linalg.norm(X, 2)
    Y = X / max(spectral, np.abs(X).max() / lam)
    mu = 1.25 / spectral
    mu_max = mu * 1e7
    objective, residual = [], []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        L, nuclear = _svt(X - S + Y / mu, 1.0 / mu, max_rank)
        S = _shrink(X - L + Y / mu, lam / mu)
        Z = X - L - S
        Y = Y + mu * Z
        mu = min(mu * rho, mu_max)
        objective.append(nuclear + lam * float(np.abs(S).sum()))
        residual.append(float(np.linalg.norm(Z) / norm_fro))
        if residual[-1] <= tol:
            converged = True
            break
    return RpcaResult(L, S, converged, it, objective, residual)


class ClassicalDecomposer(TransformerMixin, BaseEstimator):
    """Transformer returning one component of a classical decomposition."""

    def __init__(self, period=7, component="residual"):
        self.period = period
        self.component = component

    def fit(self, X, y=None):
        if self.component not in ("trend", "seasonal", "residual", "deseasonalized"):
            raise InvalidParams(f"unknown component {self.component!r}")
        return self

    def transform(self, X):
        return _component(classical_decompose(X, self.period), X, self.component)


class STLDecomposer(TransformerMixin, BaseEstimator):
    def __init__(self, period=7, robust=True, inner_iters=None, component="residual"):
        self.period = period
        self.robust = robust
        self.inner_iters = inner_iters
        self.component = component

    def fit(self, X, y=None):
        if self.component not in ("trend", "seasonal", "residual", "deseasonalized"):
            raise InvalidParams(f"unknown component {self.component!r}")
        return self

    def transform(self, X):
        dec, _ = stl_with_status(X, self.period, self.inner_iters, self.robust)
        return _component(dec, X, self.component)


def _component(dec: Decomposition, X, component: str):
    if component == "deseasonalized":
        out = dec.trend.values + dec.residual.values
    else:
        out = getattr(dec, component).values
    if isinstance(X, TimeSeries):
        return X.with_values(out)
    return np.asarray(out)
