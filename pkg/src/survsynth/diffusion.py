"""Noise schedules plus forward and reverse kernels for the two diffusion processes.

Continuous block: variance-exploding Gaussian perturbation
``z_u = z_0 + sigma(u) * eps`` with a power-mean ``sigma``.
Discrete block: absorbing-state masking where each one-hot row survives
with probability ``alpha_u`` and otherwise becomes the mask vertex.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    rho: float = 7.0
    eps_mask: float = 1e-3

    def __post_init__(self):
        if not 0 < self.sigma_min < self.sigma_max:
            raise ValueError("need 0 < sigma_min < sigma_max")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if not 0 <= self.eps_mask < 1:
            raise ValueError("eps_mask must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


def _check_u(u):
    u = np.asarray(u, dtype=float)
    if np.any((u < 0) | (u > 1)) or np.any(np.isnan(u)):
        raise ValueError(f"diffusion time must lie in [0, 1], got {u}")
    return u


def sigma_cont(u, sched: NoiseSchedule):
    u = _check_u(u)
    lo = sched.sigma_min ** (1.0 / sched.rho)
    hi = sched.sigma_max ** (1.0 / sched.rho)
    out = (lo + u * (hi - lo)) ** sched.rho
    return float(out) if out.ndim == 0 else out


def alpha_disc(u, sched: NoiseSchedule):
    """Keep-probability ``alpha_u`` and its derivative (constant)."""
    u = _check_u(u)
    alpha = 1.0 - (1.0 - sched.eps_mask) * u
    alpha_dot = -(1.0 - sched.eps_mask)
    if alpha.ndim == 0:
        return float(alpha), alpha_dot
    return alpha, np.full_like(alpha, alpha_dot)


def perturb_continuous(z0: np.ndarray, u: float, sched: NoiseSchedule, rng: np.random.Generator):
    eps = rng.standard_normal(z0.shape)
    return z0 + sigma_cont(u, sched) * eps, eps


def mask_rows(z: np.ndarray, masked: np.ndarray) -> np.ndarray:
    out = z.copy()
    out[masked] = 0.0
    out[masked, -1] = 1.0
    return out


def is_masked(z: np.ndarray) -> np.ndarray:
    return z[:, -1] == 1


def perturb_discrete(z0: list[np.ndarray], u: float, sched: NoiseSchedule, rng: np.random.Generator):
    """Mask each row of each channel independently with probability ``1 - alpha_u``."""
    alpha, _ = alpha_disc(u, sched)
    return [mask_rows(z, rng.random(len(z)) >= alpha) for z in z0]


def reverse_posterior_discrete(z_u: np.ndarray, z0_hat: np.ndarray, alpha_s: float, alpha_u: float) -> np.ndarray:
    """Posterior over the ``C + 1`` states at the earlier time ``s``.

    ``z_u`` is an (n, C+1) block of one-hot rows, ``z0_hat`` an (n, C) block of
    clean-category probabilities. Rows already unmasked stay put.
    """
    if alpha_s < alpha_u:
        raise ValueError(f"alpha_s ({alpha_s}) must be >= alpha_u ({alpha_u})")
    z_u = np.atleast_2d(z_u)
    z0_hat = np.atleast_2d(z0_hat)
    if alpha_u >= 1.0:
        # nothing can be masked at alpha_u = 1
        return z_u.astype(float)
    unmask = (alpha_s - alpha_u) / (1.0 - alpha_u)
    stay = (1.0 - alpha_s) / (1.0 - alpha_u)
    post = np.concatenate([unmask * z0_hat, np.full((len(z0_hat), 1), stay)], axis=1)
    masked = is_masked(z_u)
    return np.where(masked[:, None], post, z_u.astype(float))


def reverse_step_continuous(zu: np.ndarray, eps_hat: np.ndarray, sigma_u: float, sigma_s: float) -> np.ndarray:
    """Deterministic x0-prediction step from noise level ``sigma_u`` down to ``sigma_s``."""
    if not sigma_s < sigma_u:
        raise ValueError(f"sigma_s ({sigma_s}) must be below sigma_u ({sigma_u})")
    z0_hat = zu - sigma_u * eps_hat
    return z0_hat + sigma_s * eps_hat
