"""Kaplan-Meier curves, curve gaps, Harrell's C-index and the IPCW Brier score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class KmCurve:
    times: np.ndarray  # distinct observed times, ascending
    survival: np.ndarray  # S(t) just after each time
    at_risk: np.ndarray
    events: np.ndarray

    @property
    def max_time(self) -> float:
        return float(self.times[-1]) if len(self.times) else 0.0

    def __call__(self, t) -> np.ndarray:
        """Right-continuous step evaluation."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        vals = np.where(idx >= 0, self.survival[np.maximum(idx, 0)], 1.0)
        return vals

    def left_limit(self, t) -> np.ndarray:
        """S(t-)."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="left") - 1
        return np.where(idx >= 0, self.survival[np.maximum(idx, 0)], 1.0)


def km_fit(time, event) -> KmCurve:
    """Product-limit estimator; censored subjects leave the risk set after their time."""
    t = np.asarray(time, dtype=float)
    e = np.asarray(event, dtype=float)
    if len(t) == 0:
        raise ValueError("km_fit needs at least one observation")
    uniq, inv = np.unique(t, return_inverse=True)
    d = np.bincount(inv, weights=e, minlength=len(uniq))
    c = np.bincount(inv, minlength=len(uniq))
    at_risk = len(t) - np.concatenate([[0], np.cumsum(c)[:-1]])
    surv = np.cumprod((at_risk - d) / at_risk)
    return KmCurve(uniq, surv, at_risk.astype(int), d.astype(int))


def km_grid(curve_a: KmCurve, curve_b: KmCurve, n_points: int = 100) -> np.ndarray:
    return np.linspace(0.0, min(curve_a.max_time, curve_b.max_time), n_points)


def km_mse(curve_real: KmCurve, curve_syn: KmCurve, grid=None) -> float:
    grid = km_grid(curve_real, curve_syn) if grid is None else np.asarray(grid, dtype=float)
    if len(grid) == 0:
        raise ValueError("km_mse needs a nonempty grid")
    return float(np.mean((curve_real(grid) - curve_syn(grid)) ** 2))


def rmst(curve: KmCurve, horizon: float) -> float:
    """Exact area under the step function on [0, horizon]."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    knots = curve.times[curve.times < horizon]
    edges = np.concatenate([[0.0], knots, [horizon]])
    levels = np.concatenate([[1.0], curve.survival[: len(knots)]])
    return float(np.sum(levels * np.diff(edges)))


def rmst_gap(curve_real: KmCurve, curve_syn: KmCurve, horizon: float | None = None) -> float:
    if horizon is None:
        horizon = min(curve_real.max_time, curve_syn.max_time)
    return abs(rmst(curve_real, horizon) - rmst(curve_syn, horizon))


def c_index(risk, time, event, chunk: int = 2048) -> float:
    """Harrell's concordance: pair (i, j) counts when E_i = 1 and T_i < T_j."""
    r = np.asarray(risk, dtype=float)
    t = np.asarray(time, dtype=float)
    e = np.asarray(event).astype(bool)
    if len(r) < 2:
        raise ValueError("c_index needs at least two subjects")
    conc = 0.0
    comparable = 0
    idx = np.flatnonzero(e)
    for start in range(0, len(idx), chunk):
        i = idx[start : start + chunk]
        later = t[None, :] > t[i, None]
        comparable += int(later.sum())
        conc += float(np.sum(later & (r[i, None] > r[None, :])))
        conc += 0.5 * float(np.sum(later & (r[i, None] == r[None, :])))
    if comparable == 0:
        return 0.5
    return conc / comparable


def brier_score(surv_at_t, time, event, t_star: float, censor_curve: KmCurve | None = None) -> float:
    """Inverse-probability-of-censoring weighted Brier score at ``t_star``.

    ``surv_at_t`` holds each subject's predicted S(t_star | x). Subjects with an
    event by ``t_star`` are weighted by 1/G(T_i-), subjects still at risk by
    1/G(t_star), and subjects censored before ``t_star`` contribute zero; the
    sum is divided by n. G is the Kaplan-Meier curve of the censoring times.
    """
    s = np.asarray(surv_at_t, dtype=float)
    t = np.asarray(time, dtype=float)
    e = np.asarray(event, dtype=float)
    if censor_curve is None:
        censor_curve = km_fit(t, 1.0 - e)
    g_star = float(censor_curve(t_star))
    if g_star <= 0:
        raise ValueError(f"censoring survival is zero at t={t_star}; horizon beyond censoring support")
    died = (t <= t_star) & (e == 1)
    alive = t > t_star
    g_i = censor_curve.left_limit(t)
    contrib = np.zeros_like(s)
    contrib[died] = s[died] ** 2 / g_i[died]
    contrib[alive] = (1.0 - s[alive]) ** 2 / g_star
    return float(np.mean(contrib))
