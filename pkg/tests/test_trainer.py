import json
import math

import numpy as np
import pytest

from survsynth.dataset import encode, one_hot
from survsynth.denoiser import init_params
from survsynth.diffusion import mask_rows
from survsynth.simulate import WorldConfig, simulate
from survsynth.survival_loss import event_weights
from survsynth.trainer import (
    TrainerConfig,
    TrainingError,
    calibrate_lambda,
    draw_noise,
    lambda_schedule,
    loss_cont,
    loss_disc,
    step_losses,
    total_loss,
    train,
)


def toy_world(n=512, seed=0):
    world = WorldConfig(
        n=n,
        d_cont=2,
        cardinalities=[2],
        shape=1.5,
        scale=10.0,
        beta_cont=[0.8, -0.5],
        beta_disc=[[0.0, 0.7]],
        target_censoring=0.4,
        seed=seed,
    )
    return simulate(world)


SMALL = dict(widths=(16, 16), surv_width=8, time_dim=8, batch_size=32)


# -- loss terms ---------------------------------------------------------------


def test_loss_cont_examples():
    eps = np.ones((3, 4))
    assert loss_cont(eps, eps)[0] == 0.0
    assert loss_cont(np.zeros((1, 4)), np.ones((1, 4)))[0] == 1.0


def test_loss_cont_matches_recomputation(rng):
    a, b = rng.normal(size=(7, 3)), rng.normal(size=(7, 3))
    value, grad = loss_cont(a, b)
    assert value == pytest.approx(sum((x - y) ** 2 for x, y in zip(a.ravel(), b.ravel())) / 21, rel=1e-12)
    np.testing.assert_allclose(grad, 2 * (a - b) / 21)


def test_loss_disc_nothing_masked_is_zero():
    z0 = [one_hot(np.array([0, 1]), 2)]
    probs = [np.full((2, 3), 1 / 3)]
    assert loss_disc(probs, z0, z0, 0.5, -1.0)[0] == 0.0


def test_loss_disc_point_mass_on_truth_is_zero():
    z0 = [one_hot(np.array([0, 1]), 2)]
    zu = [mask_rows(z0[0], np.array([True, True]))]
    probs = [z0[0].copy()]
    assert loss_disc(probs, z0, zu, 0.5, -1.0)[0] == pytest.approx(0.0, abs=1e-15)


def test_loss_disc_uniform_all_masked():
    z0 = [one_hot(np.array([0, 1, 1, 0]), 2)]
    zu = [mask_rows(z0[0], np.ones(4, dtype=bool))]
    probs = [np.full((4, 3), 1 / 3)]  # mask slot renormalized out -> 1/2 per class
    loss, _, clamped = loss_disc(probs, z0, zu, 0.5, -1.0)
    assert loss == pytest.approx(2 * math.log(2), abs=1e-12)
    assert clamped == 0


def test_loss_disc_clamps_zero_probability():
    z0 = [one_hot(np.array([0]), 2)]
    zu = [mask_rows(z0[0], np.array([True]))]
    probs = [np.array([[0.0, 0.6, 0.4]])]
    loss, _, clamped = loss_disc(probs, z0, zu, 0.5, -1.0)
    assert clamped == 1
    assert loss == pytest.approx(2 * -math.log(1e-12))


def test_total_loss_arithmetic():
    comps = {"cont": 1.0, "disc": 2.0, "surv": 3.0}
    assert total_loss(comps, 1.0) == 6.0
    assert total_loss(comps, 0.0) == 3.0


# -- survival weight ------------------------------------------------------------


def test_calibrate_lambda_examples():
    assert calibrate_lambda(7.0, 2.0, 0.3, 10.0, 1e-8) == pytest.approx(1.5, rel=1e-8)
    assert calibrate_lambda(7.0, 0.0, 0.3, 10.0, 1e-8) == 10.0
    assert calibrate_lambda(3.0, 3.0, 0.5, 10.0, 1e-8) == pytest.approx(1.0, rel=1e-8)


def test_lambda_schedule_ramp():
    assert lambda_schedule(0, 1500, 2.0) == 0.0
    assert lambda_schedule(750, 1500, 2.0) == 1.0
    assert lambda_schedule(1500, 1500, 2.0) == 2.0
    assert lambda_schedule(4000, 1500, 2.0) == 2.0
    with pytest.raises(ValueError):
        lambda_schedule(10, 1500, None)


def test_lambda_schedule_nondecreasing_and_bounded():
    lam = [lambda_schedule(e, 100, 3.0) for e in range(300)]
    assert all(b >= a for a, b in zip(lam, lam[1:]))
    assert max(lam) <= 3.0


# -- config ---------------------------------------------------------------------


def test_defaults():
    cfg = TrainerConfig()
    assert (cfg.epochs, cfg.batch_size, cfg.learning_rate) == (4000, 256, 0.002)
    assert (cfg.warmup_epochs, cfg.alpha_surv, cfg.calibration_steps) == (1500, 0.3, 10)


@pytest.mark.parametrize(
    "kw", [dict(alpha_surv=0.0), dict(alpha_surv=1.0), dict(calibration_steps=0), dict(epochs=10, warmup_epochs=20)]
)
def test_invalid_config(kw):
    with pytest.raises(ValueError):
        TrainerConfig(**kw)


# -- training loop --------------------------------------------------------------


def test_zero_learning_rate_leaves_params_unchanged():
    res = toy_world(64)
    cfg = TrainerConfig(epochs=3, warmup_epochs=1, learning_rate=0.0, seed=4, **SMALL)
    model, _ = train(res.cohort, res.schema, cfg)
    init_seed, _ = np.random.SeedSequence(4).spawn(2)
    fresh = init_params(res.schema, SMALL["widths"], int(init_seed.generate_state(1)[0]), 8, 8)
    for k, v in fresh.tensors.items():
        np.testing.assert_array_equal(model.params.tensors[k], v)


def test_training_is_bit_reproducible():
    res = toy_world(64)
    cfg = TrainerConfig(epochs=4, warmup_epochs=2, seed=1, **SMALL)
    a, sa = train(res.cohort, res.schema, cfg)
    b, sb = train(res.cohort, res.schema, cfg)
    assert np.array_equal(a.params.flat(), b.params.flat())
    assert sa.history == sb.history


def test_calibration_and_log(tmp_path):
    res = toy_world(96)
    cfg = TrainerConfig(epochs=6, warmup_epochs=4, calibration_steps=5, seed=0, **SMALL)
    log = tmp_path / "log.jsonl"
    _, state = train(res.cohort, res.schema, cfg, log_path=log, log_extra={"seed": 0})
    assert state.lambda_calibrated is not None
    assert 0 < state.lambda_calibrated <= cfg.lambda_max
    expected = calibrate_lambda(state.lbar_diff, state.lbar_surv, cfg.alpha_surv, cfg.lambda_max, cfg.eps_stab)
    assert state.lambda_calibrated == expected
    assert state.calib_count == 5
    lines = [json.loads(s) for s in log.read_text().splitlines()]
    assert len(lines) == 6
    assert set(lines[0]) == {"epoch", "cont", "disc", "surv", "total", "lambda_surv", "seed"}
    lam = [rec["lambda_surv"] for rec in lines]
    assert lam[0] == 0.0  # survival term is off until calibrated
    assert all(b >= a for a, b in zip(lam, lam[1:]))


def test_ablation_never_uses_survival_term():
    res = toy_world(64)
    cfg = TrainerConfig(epochs=4, warmup_epochs=1, use_survival_loss=False, seed=0, **SMALL)
    _, state = train(res.cohort, res.schema, cfg)
    assert all(rec["lambda_surv"] == 0.0 for rec in state.history)
    assert all(rec["total"] == pytest.approx(rec["cont"] + rec["disc"]) for rec in state.history)


def test_non_finite_loss_aborts_with_component_name(monkeypatch):
    import survsynth.trainer as trainer_mod

    def broken(eps_hat, eps):
        return float("nan"), np.zeros_like(eps)

    monkeypatch.setattr(trainer_mod, "loss_cont", broken)
    res = toy_world(64)
    cfg = TrainerConfig(epochs=2, warmup_epochs=1, seed=0, **SMALL)
    with pytest.raises(TrainingError, match="non-finite cont"):
        train(res.cohort, res.schema, cfg)


def expected_diffusion_loss(model, cohort, draws=300, seed=123):
    """L_total averaged over a fixed set of noise draws (common random numbers)."""
    batch = encode(cohort, model.codec)
    weights = event_weights(cohort.time, model.surv_cfg)
    rng = np.random.default_rng(seed)
    values = []
    for _ in range(draws):
        noise = draw_noise(batch.z_cont, batch.z_disc, model.params.schedule, rng)
        comps, _ = step_losses(
            model.params, batch.z_cont, batch.z_disc, cohort.time, cohort.event, noise, weights, (1, 1, 0), False
        )
        values.append(comps["total"])
    return float(np.mean(values))


@pytest.mark.slow
def test_loss_decreases_over_200_epochs():
    res = toy_world(512)
    first, _ = train(res.cohort, res.schema, TrainerConfig(epochs=1, warmup_epochs=0, seed=0))
    last, state = train(res.cohort, res.schema, TrainerConfig(epochs=200, warmup_epochs=150, seed=0))
    # the single-draw epoch averages are recorded as well, but their spread
    # (one noise level per step, two steps per epoch) hides the trend
    start = expected_diffusion_loss(first, res.cohort)
    end = expected_diffusion_loss(last, res.cohort)
    assert end <= 0.7 * start, (start, end)
    assert len(state.history) == 200
