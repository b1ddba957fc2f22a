"""Sparsity-weighted Cox partial negative log-likelihood on predicted risks."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class SurvLossConfig:
    tau: float
    alpha_decay: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.alpha_decay > 0:
            raise ValueError("alpha_decay must be positive")

    @classmethod
    def from_times(cls, times, quantile: float = 0.9) -> "SurvLossConfig":
        """Knee at the given quantile of observed times; weight e^-1 at the latest time."""
        times = np.asarray(times, dtype=float)
        tau = float(np.quantile(times, quantile))
        return cls(tau, 1.0 / (float(times.max()) - tau + 1e-8))

    def to_dict(self) -> dict:
        return asdict(self)


def event_weights(times, cfg: SurvLossConfig) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    return np.where(times <= cfg.tau, 1.0, np.exp(-cfg.alpha_decay * np.maximum(times - cfg.tau, 0.0)))


def _tie_bounds(t_desc: np.ndarray):
    """First and last position of each element's tie group in a descending array."""
    neg = -t_desc
    start = np.searchsorted(neg, neg, side="left")
    end = np.searchsorted(neg, neg, side="right") - 1
    return start, end


def cox_weighted_nll(risk, time, event, weights=None):
    """Weighted Breslow partial likelihood.

    Returns ``(loss, grad_risk, has_events)``. Risk sets are ``{j : T_j >= T_i}``
    within the given rows, so tied event times share one risk set.
    """
    r = np.asarray(risk, dtype=float)
    t = np.asarray(time, dtype=float)
    e = np.asarray(event, dtype=float)
    w = np.ones_like(r) if weights is None else np.asarray(weights, dtype=float)
    n = len(r)
    if not (len(t) == len(e) == len(w) == n):
        raise ValueError("risk, time, event and weights must have equal length")
    coef = w * e
    if n == 0 or not np.any(coef > 0):
        return 0.0, np.zeros(n), False

    order = np.argsort(-t, kind="stable")
    t_s, r_s, c_s = t[order], r[order], coef[order]
    start, end = _tie_bounds(t_s)
    log_denom = np.logaddexp.accumulate(r_s)[end]
    loss = -float(np.sum(c_s * (r_s - log_denom)))

    # d/dr_j of sum_i c_i log_denom_i = exp(r_j) * sum_{i: T_i <= T_j} c_i exp(-log_denom_i)
    with np.errstate(divide="ignore"):
        log_a = np.where(c_s > 0, np.log(np.where(c_s > 0, c_s, 1.0)) - log_denom, -np.inf)
    tail = np.logaddexp.accumulate(log_a[::-1])[::-1]
    grad_s = np.exp(r_s + tail[start]) - c_s
    grad = np.empty(n)
    grad[order] = grad_s
    return loss, grad, True
