"""Per-feature distribution distances between real and synthetic columns."""

from __future__ import annotations

import warnings

import numpy as np

N_BINS = 20


def _js_from_counts(p: np.ndarray, q: np.ndarray) -> float:
    p = p / p.sum()
    q = q / q.sum()
    m = 0.5 * (p + q)

    def kl(a):
        nz = a > 0
        return float(np.sum(a[nz] * np.log2(a[nz] / m[nz])))

    jsd = 0.5 * kl(p) + 0.5 * kl(q)
    return float(np.sqrt(min(max(jsd, 0.0), 1.0)))


def js_distance(real, syn, kind: str = "continuous", bins: int = N_BINS) -> float:
    """Jensen-Shannon distance (base 2, so in [0, 1]).

    Discrete columns compare category frequencies; continuous columns are
    histogrammed on ``bins`` equal-width bins spanning the pooled range.
    """
    real = np.asarray(real)
    syn = np.asarray(syn)
    if len(real) == 0 or len(syn) == 0:
        raise ValueError("js_distance needs nonempty columns")
    if kind == "discrete":
        cats = np.union1d(real, syn)
        p = np.array([np.sum(real == c) for c in cats], dtype=float)
        q = np.array([np.sum(syn == c) for c in cats], dtype=float)
        return _js_from_counts(p, q)
    real = real.astype(float)
    syn = syn.astype(float)
    lo = min(real.min(), syn.min())
    hi = max(real.max(), syn.max())
    if hi == lo:
        return 0.0
    edges = np.linspace(lo, hi, bins + 1)
    p, _ = np.histogram(real, bins=edges)
    q, _ = np.histogram(syn, bins=edges)
    return _js_from_counts(p.astype(float), q.astype(float))


def _w1(a: np.ndarray, b: np.ndarray) -> float:
    # integral of |F_a - F_b| over the merged support; equals the quantile coupling
    a = np.sort(a)
    b = np.sort(b)
    allv = np.sort(np.concatenate([a, b]))
    deltas = np.diff(allv)
    fa = np.searchsorted(a, allv[:-1], side="right") / len(a)
    fb = np.searchsorted(b, allv[:-1], side="right") / len(b)
    return float(np.sum(np.abs(fa - fb) * deltas))


def wasserstein_distance(real, syn, normalize: bool = True) -> float:
    """1-D Wasserstein-1 distance, on values min-max scaled by the real column.

    Returns NaN (with a warning) when the real column is constant and
    ``normalize`` is set.
    """
    real = np.asarray(real, dtype=float)
    syn = np.asarray(syn, dtype=float)
    if len(real) == 0 or len(syn) == 0:
        raise ValueError("wasserstein_distance needs nonempty columns")
    if normalize:
        lo, hi = real.min(), real.max()
        if hi == lo:
            warnings.warn("constant real column skipped in Wasserstein distance", stacklevel=2)
            return float("nan")
        real = (real - lo) / (hi - lo)
        syn = (syn - lo) / (hi - lo)
    return _w1(real, syn)
