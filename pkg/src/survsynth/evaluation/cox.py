"""Cox proportional hazards by Newton-Raphson on the Breslow partial likelihood."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class CoxModel:
    beta: np.ndarray
    baseline_times: np.ndarray  # distinct event times
    baseline_cumhaz: np.ndarray  # Breslow H0 at those times
    log_likelihood: float
    n_iter: int
    converged: bool
    separation: bool
    loglik_path: list[float] = field(default_factory=list)  # one entry per iterate, starting at beta = 0

    def linear_predictor(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.beta

    def cumulative_hazard(self, t) -> np.ndarray:
        idx = np.searchsorted(self.baseline_times, np.asarray(t, dtype=float), side="right") - 1
        return np.where(idx >= 0, self.baseline_cumhaz[np.maximum(idx, 0)], 0.0)

    def predict_survival(self, X, t) -> np.ndarray:
        """S(t | x) for every row of X at a single time t."""
        return np.exp(-self.cumulative_hazard(t) * np.exp(self.linear_predictor(X)))


def _sorted_desc(X, T, E):
    order = np.argsort(-T, kind="stable")
    Ts = T[order]
    neg = -Ts
    end = np.searchsorted(neg, neg, side="right") - 1
    return X[order], Ts, E[order], end


def _breslow_terms(beta, Xs, Es, end, need_info=True):
    eta = Xs @ beta
    c = eta.max()
    w = np.exp(eta - c)
    s0 = np.cumsum(w)[end]
    s1 = np.cumsum(w[:, None] * Xs, axis=0)[end]
    ev = Es == 1
    loglik = float(np.sum(eta[ev] - c - np.log(s0[ev])))
    xbar = s1[ev] / s0[ev, None]
    score = np.sum(Xs[ev] - xbar, axis=0)
    if not need_info:
        return loglik, score, None
    s2 = np.cumsum(w[:, None, None] * Xs[:, :, None] * Xs[:, None, :], axis=0)[end]
    info = np.sum(s2[ev] / s0[ev, None, None] - xbar[:, :, None] * xbar[:, None, :], axis=0)
    return loglik, score, info


def partial_log_likelihood(beta, X, T, E) -> float:
    X = np.asarray(X, dtype=float).reshape(len(T), -1)
    Xs, _, Es, end = _sorted_desc(X, np.asarray(T, dtype=float), np.asarray(E))
    return _breslow_terms(np.asarray(beta, dtype=float), Xs, Es, end, need_info=False)[0]


def coxph_fit(X, T, E, max_iter: int = 100, tol: float = 1e-6, beta_bound: float = 10.0) -> CoxModel:
    """Fit beta by Newton-Raphson with step halving.

    Converges when max|score| < ``tol``. A fit whose coefficients exceed
    ``beta_bound`` in absolute value (covariates are expected standardized) or
    that runs out of iterations is flagged as separated / not converged and
    the last iterate is returned.
    """
    T = np.asarray(T, dtype=float)
    E = np.asarray(E).astype(int)
    X = np.asarray(X, dtype=float).reshape(len(T), -1)
    n, p = X.shape
    if n < 2:
        raise ValueError("coxph_fit needs at least 2 subjects")
    if not np.any(E == 1):
        raise ValueError("coxph_fit needs at least one event")
    Xs, Ts, Es, end = _sorted_desc(X, T, E)
    beta = np.zeros(p)
    loglik, score, info = _breslow_terms(beta, Xs, Es, end)
    path = [loglik]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(score), initial=0.0) < tol:
            converged = True
            it -= 1
            break
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(info, score, rcond=None)[0]
        for _ in range(30):
            cand = beta + step
            ll_c, sc_c, inf_c = _breslow_terms(cand, Xs, Es, end)
            if np.isfinite(ll_c) and ll_c >= loglik - 1e-12:
                break
            step = step / 2
        beta, loglik, score, info = cand, ll_c, sc_c, inf_c
        path.append(loglik)
    else:
        converged = np.max(np.abs(score), initial=0.0) < tol

    separation = bool(np.any(np.abs(beta) > beta_bound))
    if separation:
        converged = False
        logger.warning("Cox fit shows monotone likelihood (|beta| > %g)", beta_bound)

    # Breslow baseline hazard at distinct event times
    eta = X @ beta
    ev_times, deaths = np.unique(T[E == 1], return_counts=True)
    order = np.argsort(T)
    t_sorted = T[order]
    risk_sum = np.cumsum(np.exp(eta[order])[::-1])[::-1]
    first = np.searchsorted(t_sorted, ev_times, side="left")
    h0 = deaths / risk_sum[first]
    return CoxModel(beta, ev_times, np.cumsum(h0), loglik, it, bool(converged), separation, path)
