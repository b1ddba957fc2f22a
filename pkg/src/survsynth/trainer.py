"""Joint diffusion + survival training loop."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import denoiser
from .dataset import Cohort, FeatureSchema, encode, fit_codec
from .diffusion import NoiseSchedule, alpha_disc, is_masked, mask_rows, sigma_cont
from .model import Model
from .survival_loss import SurvLossConfig, cox_weighted_nll, event_weights

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainerConfig:
    epochs: int = 4000
    batch_size: int = 256
    learning_rate: float = 0.002
    lambda_cont: float = 1.0
    lambda_disc: float = 1.0
    alpha_surv: float = 0.3
    lambda_max: float = 10.0
    warmup_epochs: int = 1500
    calibration_steps: int = 10
    eps_stab: float = 1e-8
    seed: int = 0
    widths: tuple[int, ...] = (256, 256)
    surv_width: int = 64
    time_dim: int = 32
    use_survival_loss: bool = True

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if not 0 < self.alpha_surv < 1:
            raise ValueError("alpha_surv must lie in (0, 1)")
        if self.calibration_steps < 1:
            raise ValueError("calibration_steps must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0 <= self.warmup_epochs <= self.epochs:
            raise ValueError("warmup_epochs must lie in [0, epochs]")
        if self.lambda_cont < 0 or self.lambda_disc < 0 or self.lambda_max <= 0:
            raise ValueError("loss weights must be nonnegative and lambda_max positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d


@dataclass
class TrainerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    diff_sum: float = 0.0
    surv_sum: float = 0.0
    calib_count: int = 0
    surv_count: int = 0
    lambda_calibrated: float | None = None
    history: list[dict] = field(default_factory=list)
    prob_clamps: int = 0

    @property
    def lbar_diff(self) -> float:
        return self.diff_sum / self.calib_count if self.calib_count else 0.0

    @property
    def lbar_surv(self) -> float:
        return self.surv_sum / self.surv_count if self.surv_count else 0.0


# -- loss terms ---------------------------------------------------------------


def loss_cont(eps_hat: np.ndarray, eps: np.ndarray):
    """Mean squared noise-prediction error and its gradient w.r.t. ``eps_hat``."""
    diff = eps_hat - eps
    if diff.size == 0:
        return 0.0, np.zeros_like(diff)
    return float(np.mean(diff**2)), 2.0 * diff / diff.size


def loss_disc(x0_probs, z0_disc, zu_disc, alpha: float, alpha_dot: float):
    """Single-draw estimate of the masked-diffusion ELBO term.

    The clean-category distribution is ``x0_probs`` renormalized over the true
    categories. Cross-entropy is scaled by ``-alpha_dot / (1 - alpha)`` and
    averaged over all (row, channel) positions; unmasked positions add zero.
    Returns ``(loss, grad_logits, n_clamped)`` where the gradient is taken
    w.r.t. the logits that produced ``x0_probs``.
    """
    n = len(z0_disc[0]) if z0_disc else 0
    n_pos = n * len(z0_disc)
    grads = [np.zeros_like(p) for p in x0_probs]
    masked = [is_masked(z) for z in zu_disc]
    if n_pos == 0 or not any(m.any() for m in masked):
        return 0.0, grads, 0
    if not alpha < 1:
        raise ValueError("alpha must be < 1 when positions are masked")
    weight = -alpha_dot / (1.0 - alpha)
    total, clamped = 0.0, 0
    for j, (probs, z0, m) in enumerate(zip(x0_probs, z0_disc, masked)):
        if not m.any():
            continue
        true = probs[:, :-1] / np.maximum(probs[:, :-1].sum(axis=1, keepdims=True), 1e-300)
        p_true = np.sum(true * z0[:, :-1], axis=1)
        low = p_true < PROB_FLOOR
        clamped += int(np.sum(low & m))
        ce = -np.log(np.maximum(p_true, PROB_FLOOR))
        total += float(np.sum(ce[m]))
        g = np.zeros_like(probs)
        g[:, :-1] = true - z0[:, :-1]
        grads[j] = g * (m[:, None] * weight / n_pos)
    return weight * total / n_pos, grads, clamped


def total_loss(components: dict, lambda_surv: float, lambda_cont: float = 1.0, lambda_disc: float = 1.0) -> float:
    return lambda_cont * components["cont"] + lambda_disc * components["disc"] + lambda_surv * components["surv"]


def calibrate_lambda(lbar_diff: float, lbar_surv: float, alpha_surv: float, lambda_max: float, eps: float) -> float:
    return min(lambda_max, alpha_surv * lbar_diff / ((1.0 - alpha_surv) * (lbar_surv + eps)))


def lambda_schedule(epoch: int, warmup_epochs: int, lambda_calibrated: float | None) -> float:
    """Linear ramp from 0 at epoch 0 to the calibrated weight at ``warmup_epochs``."""
    if epoch < 0:
        raise ValueError("epoch must be nonnegative")
    if lambda_calibrated is None:
        raise ValueError("survival weight requested before calibration finished")
    if warmup_epochs <= 0 or epoch >= warmup_epochs:
        return lambda_calibrated
    return lambda_calibrated * epoch / warmup_epochs


# -- one optimization step ----------------------------------------------------


@dataclass
class StepNoise:
    """Everything random about one step, drawn up front so the loss is a pure function of the params."""

    u: float
    eps: np.ndarray
    zu_disc: list[np.ndarray]


def draw_noise(z0_cont, z0_disc, sched: NoiseSchedule, rng: np.random.Generator, u: float | None = None) -> StepNoise:
    if u is None:
        u = float(rng.random())
    eps = rng.standard_normal(z0_cont.shape)
    alpha, _ = alpha_disc(u, sched)
    zu_disc = [mask_rows(z, rng.random(len(z)) >= alpha) for z in z0_disc]
    return StepNoise(u, eps, zu_disc)


def step_losses(
    params: denoiser.DenoiserParams,
    z0_cont: np.ndarray,
    z0_disc: list[np.ndarray],
    times: np.ndarray,
    events: np.ndarray,
    noise: StepNoise,
    surv_weights: np.ndarray,
    lambdas: tuple[float, float, float],
    need_grad: bool = True,
):
    """Loss components, weighted total and parameter gradients for one batch.

    ``lambdas`` is ``(lambda_cont, lambda_disc, lambda_surv)``.
    """
    lam_cont, lam_disc, lam_surv = lambdas
    sched = params.schedule
    zu_cont = z0_cont + sigma_cont(noise.u, sched) * noise.eps
    out = denoiser.forward(params, zu_cont, noise.zu_disc, noise.u)
    l_cont, g_eps = loss_cont(out.eps_hat, noise.eps)
    alpha, alpha_dot = alpha_disc(noise.u, sched)
    l_disc, g_logits, clamped = loss_disc(out.x0_probs, z0_disc, noise.zu_disc, alpha, alpha_dot)
    l_surv, g_risk, has_events = cox_weighted_nll(out.risk, times, events, surv_weights)
    comps = {"cont": l_cont, "disc": l_disc, "surv": l_surv, "has_events": has_events, "clamped": clamped}
    comps["total"] = total_loss(comps, lam_surv, lam_cont, lam_disc)
    if not need_grad:
        return comps, None
    grads = denoiser.backward(
        params,
        out,
        grad_eps_hat=lam_cont * g_eps,
        grad_logits=[lam_disc * g for g in g_logits],
        grad_risk=lam_surv * g_risk if lam_surv else None,
    )
    return comps, grads


def adam_update(params, grads, state: TrainerState, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
    state.step += 1
    t = state.step
    for k, g in grads.items():
        if k not in state.m:
            state.m[k] = np.zeros_like(g)
            state.v[k] = np.zeros_like(g)
        state.m[k] = beta1 * state.m[k] + (1 - beta1) * g
        state.v[k] = beta2 * state.v[k] + (1 - beta2) * g * g
        m_hat = state.m[k] / (1 - beta1**t)
        v_hat = state.v[k] / (1 - beta2**t)
        params.tensors[k] = params.tensors[k] - lr * m_hat / (np.sqrt(v_hat) + eps)


# -- training loop ------------------------------------------------------------


def train(
    cohort: Cohort,
    schema: FeatureSchema,
    cfg: TrainerConfig | None = None,
    surv_cfg: SurvLossConfig | None = None,
    sched: NoiseSchedule | None = None,
    log_path: str | Path | None = None,
    t_floor: float = 1e-6,
    log_extra: dict | None = None,
) -> tuple[Model, TrainerState]:
    """Fit the codec and the denoiser on ``cohort``. Deterministic given ``cfg.seed``.

    ``log_extra`` is merged into every log record (provenance such as seed and
    config hash); it does not enter ``state.history``.
    """
    cfg = cfg or TrainerConfig()
    sched = sched or NoiseSchedule()
    codec = fit_codec(cohort, schema, t_floor=t_floor)
    surv_cfg = surv_cfg or SurvLossConfig.from_times(cohort.time)
    batch = encode(cohort, codec)
    weights_all = event_weights(cohort.time, surv_cfg)

    init_seed, loop_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    params = denoiser.init_params(
        schema,
        cfg.widths,
        seed=int(init_seed.generate_state(1)[0]),
        surv_width=cfg.surv_width,
        time_dim=cfg.time_dim,
        schedule=sched,
    )
    rng = np.random.default_rng(loop_seed)
    state = TrainerState()
    n = len(cohort)
    bs = min(cfg.batch_size, n)
    logger.info("training %d parameters on %d records", params.n_params(), n)

    log_fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(cfg.epochs):
            perm = rng.permutation(n)
            sums = {"cont": 0.0, "disc": 0.0, "surv": 0.0, "total": 0.0, "lambda_surv": 0.0}
            n_steps = 0
            for start in range(0, n, bs):
                idx = perm[start : start + bs]
                if len(idx) < 2 and n >= 2:
                    continue
                z0_cont = batch.z_cont[idx]
                z0_disc = [z[idx] for z in batch.z_disc]
                noise = draw_noise(z0_cont, z0_disc, sched, rng)

                if not cfg.use_survival_loss or state.lambda_calibrated is None:
                    lam = 0.0
                else:
                    lam = lambda_schedule(epoch, cfg.warmup_epochs, state.lambda_calibrated)
                comps, grads = step_losses(
                    params,
                    z0_cont,
                    z0_disc,
                    cohort.time[idx],
                    cohort.event[idx],
                    noise,
                    weights_all[idx],
                    (cfg.lambda_cont, cfg.lambda_disc, lam),
                )
                for key in ("cont", "disc", "surv", "total"):
                    if not math.isfinite(comps[key]):
                        raise TrainingError(f"non-finite {key} loss at epoch {epoch}, step {state.step}")
                state.prob_clamps += comps["clamped"]

                if state.lambda_calibrated is None:
                    state.diff_sum += cfg.lambda_cont * comps["cont"] + cfg.lambda_disc * comps["disc"]
                    state.calib_count += 1
                    if comps["has_events"]:
                        state.surv_sum += comps["surv"]
                        state.surv_count += 1
                    if state.calib_count >= cfg.calibration_steps:
                        state.lambda_calibrated = calibrate_lambda(
                            state.lbar_diff, state.lbar_surv, cfg.alpha_surv, cfg.lambda_max, cfg.eps_stab
                        )
                        logger.info("calibrated survival weight %.6g", state.lambda_calibrated)

                adam_update(params, grads, state, cfg.learning_rate)
                for key in ("cont", "disc", "surv", "total"):
                    sums[key] += comps[key]
                sums["lambda_surv"] += lam
                n_steps += 1

            rec = {"epoch": epoch}
            rec.update({k: v / max(n_steps, 1) for k, v in sums.items()})
            state.history.append(rec)
            if log_fh:
                log_fh.write(json.dumps({**(log_extra or {}), **rec}, sort_keys=True) + "\n")
            if epoch % 100 == 0 or epoch == cfg.epochs - 1:
                logger.debug("epoch %d: %s", epoch, rec)
    finally:
        if log_fh:
            log_fh.close()

    model = Model(schema=schema, codec=codec, params=params, surv_cfg=surv_cfg)
    return model, state
