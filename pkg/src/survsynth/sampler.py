"""Ancestral generation of synthetic cohorts from a trained model."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import denoiser
from .dataset import Cohort, EncodedBatch, decode, one_hot
from .diffusion import alpha_disc, is_masked, reverse_posterior_discrete, reverse_step_continuous, sigma_cont
from .model import Model

logger = logging.getLogger(__name__)


class SamplingError(RuntimeError):
    pass


@dataclass
class SamplerConfig:
    n_samples: int
    steps: int = 300
    t_admin: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.t_admin is not None and not self.t_admin > 0:
            raise ValueError("t_admin must be positive")


@dataclass
class SampleStats:
    forced_unmask: int = 0
    time_clamps: int = 0
    admin_censored: int = 0


def _draw_categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    r = rng.random((len(probs), 1))
    return np.minimum((r > cdf).sum(axis=1), probs.shape[1] - 1)


def sample_latent(model: Model, cfg: SamplerConfig) -> tuple[EncodedBatch, SampleStats]:
    """Run the reverse process over a uniform grid from u=1 to u=0; returns the encoded batch."""
    params = model.params
    if params.d_cont != model.schema.d_cont or params.cardinalities != model.schema.cardinalities:
        raise SamplingError("network layout does not match the model schema")
    if len(model.codec.cont_mean) != model.schema.d_cont or model.codec.cardinalities != model.schema.cardinalities:
        raise SamplingError("codec does not match the model schema")
    sched = params.schedule
    rng = np.random.default_rng(cfg.seed)
    n, K = cfg.n_samples, cfg.steps

    z_cont = sigma_cont(1.0, sched) * rng.standard_normal((n, params.d_cont + 1))
    z_disc = [one_hot(np.full(n, c), c) for c in params.cardinalities]
    stats = SampleStats()
    out = None
    for k in range(K, 0, -1):
        u, s = k / K, (k - 1) / K
        out = denoiser.forward(params, z_cont, z_disc, u)
        sigma_s = sigma_cont(s, sched) if k > 1 else 0.0
        z_cont = reverse_step_continuous(z_cont, out.eps_hat, sigma_cont(u, sched), sigma_s)
        if not np.all(np.isfinite(z_cont)):
            raise SamplingError(f"non-finite continuous state at step {K - k} (u={u:.4f})")
        a_u, _ = alpha_disc(u, sched)
        a_s, _ = alpha_disc(s, sched)
        new_disc = []
        for z, logits in zip(z_disc, out.logits):
            masked = is_masked(z)
            if not masked.any():
                new_disc.append(z)
                continue
            # mask slot excluded: clean data never sits in the mask state
            clean = denoiser.softmax(logits[masked, :-1])
            post = reverse_posterior_discrete(z[masked], clean, a_s, a_u)
            z = z.copy()
            z[masked] = one_hot(_draw_categorical(post, rng), z.shape[1] - 1)
            new_disc.append(z)
        z_disc = new_disc

    final = []
    for z, probs in zip(z_disc, out.x0_probs):
        masked = is_masked(z)
        if masked.any():
            stats.forced_unmask += int(masked.sum())
            z = z.copy()
            z[masked] = one_hot(probs[masked, :-1].argmax(axis=1), z.shape[1] - 1)
        final.append(z)
    if stats.forced_unmask:
        logger.warning("%d positions still masked at u=0 were resolved by argmax", stats.forced_unmask)

    return EncodedBatch(z_cont, final), stats


def sample(model: Model, cfg: SamplerConfig) -> tuple[Cohort, SampleStats]:
    """Generate ``cfg.n_samples`` records, decoded and optionally administratively censored."""
    batch, stats = sample_latent(model, cfg)
    with np.errstate(over="ignore"):
        cohort, stats.time_clamps = decode(batch, model.codec)
    if not np.all(np.isfinite(cohort.time)):
        raise SamplingError("generated times overflow; the model is not trained for this data")
    if cfg.t_admin is not None:
        before = int(np.sum(cohort.time > cfg.t_admin))
        cohort = administrative_censor(cohort, cfg.t_admin)
        stats.admin_censored = before
    return cohort, stats


def administrative_censor(cohort: Cohort, t_admin: float | None) -> Cohort:
    """Truncate follow-up at ``t_admin``: later times become (t_admin, censored)."""
    if t_admin is None or np.isinf(t_admin):
        return cohort
    if not t_admin > 0:
        raise ValueError("t_admin must be positive")
    late = cohort.time > t_admin
    return Cohort(
        cohort.x_cont.copy(),
        cohort.x_disc.copy(),
        np.where(late, t_admin, cohort.time),
        np.where(late, 0, cohort.event),
    )
