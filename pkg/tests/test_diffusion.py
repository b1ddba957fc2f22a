import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from survsynth.dataset import one_hot
from survsynth.diffusion import (
    NoiseSchedule,
    alpha_disc,
    is_masked,
    perturb_continuous,
    perturb_discrete,
    reverse_posterior_discrete,
    reverse_step_continuous,
    sigma_cont,
)

SCHED = NoiseSchedule()


def binomial_interval(n: int, p: float, level: float = 0.99) -> tuple[float, float]:
    lo, hi = binom.interval(level, n, p)
    return lo / n, hi / n


# -- schedules ----------------------------------------------------------------


def test_sigma_endpoints():
    assert sigma_cont(0.0, SCHED) == pytest.approx(0.002, rel=1e-12)
    assert sigma_cont(1.0, SCHED) == pytest.approx(80.0, rel=1e-12)


def test_sigma_rho_one_is_arithmetic_mean():
    assert sigma_cont(0.5, NoiseSchedule(rho=1.0)) == pytest.approx(40.001, rel=1e-12)


def test_alpha_endpoints_and_slope():
    assert alpha_disc(0.0, SCHED)[0] == 1.0
    assert alpha_disc(1.0, SCHED)[0] == pytest.approx(1e-3, abs=1e-15)
    assert alpha_disc(0.5, NoiseSchedule(eps_mask=0.0)) == (0.5, -1.0)


def test_schedules_monotone_on_grid():
    u = np.linspace(0, 1, 1000)
    assert np.all(np.diff(sigma_cont(u, SCHED)) > 0)
    assert np.all(np.diff(alpha_disc(u, SCHED)[0]) < 0)


@pytest.mark.parametrize("u", [-0.1, 1.1, float("nan")])
def test_u_outside_unit_interval_rejected(u):
    with pytest.raises(ValueError):
        sigma_cont(u, SCHED)
    with pytest.raises(ValueError):
        alpha_disc(u, SCHED)


def test_schedule_validation():
    with pytest.raises(ValueError):
        NoiseSchedule(sigma_min=1.0, sigma_max=0.5)
    with pytest.raises(ValueError):
        NoiseSchedule(eps_mask=1.0)


# -- forward processes ----------------------------------------------------------


def test_zero_noise_is_identity():
    z0 = np.arange(6.0).reshape(3, 2)
    zu = z0 + sigma_cont(0.3, SCHED) * np.zeros_like(z0)
    np.testing.assert_array_equal(zu, z0)


def test_perturbation_at_u0_has_sigma_min_spread(rng):
    z0 = np.zeros((100_000, 1))
    zu, eps = perturb_continuous(z0, 0.0, SCHED, rng)
    assert np.std(zu - z0) == pytest.approx(0.002, rel=0.02)
    np.testing.assert_allclose(zu, 0.002 * eps)


def test_discrete_alpha_one_identity(rng):
    z0 = [one_hot(rng.integers(0, 3, 50), 3)]
    out = perturb_discrete(z0, 0.0, SCHED, rng)
    np.testing.assert_array_equal(out[0], z0[0])


def test_discrete_terminal_state_mostly_masked(rng):
    z0 = [one_hot(rng.integers(0, 2, 10_000), 2)]
    out = perturb_discrete(z0, 1.0, SCHED, rng)
    assert is_masked(out[0]).mean() > 0.995


def test_discrete_masked_fraction_binomial(rng):
    sched = NoiseSchedule(eps_mask=0.0)
    z0 = [one_hot(rng.integers(0, 4, 10_000), 4)]
    out = perturb_discrete(z0, 0.3, sched, rng)  # alpha = 0.7
    lo, hi = binomial_interval(10_000, 0.3)
    assert lo <= is_masked(out[0]).mean() <= hi
    # rows remain valid: one-hot, and unmasked rows keep their category
    np.testing.assert_array_equal(out[0].sum(axis=1), 1.0)
    keep = ~is_masked(out[0])
    np.testing.assert_array_equal(out[0][keep], z0[0][keep])


# -- reverse updates ------------------------------------------------------------


def test_posterior_unmasked_row_is_point_mass():
    z_u = one_hot(np.array([1]), 3)
    post = reverse_posterior_discrete(z_u, np.array([[0.2, 0.5, 0.3]]), 0.8, 0.4)
    np.testing.assert_array_equal(post, z_u)


def test_posterior_no_window_keeps_mask():
    z_u = one_hot(np.array([3]), 3)
    post = reverse_posterior_discrete(z_u, np.array([[0.2, 0.5, 0.3]]), 0.4, 0.4)
    np.testing.assert_array_equal(post, [[0, 0, 0, 1]])


def test_posterior_full_unmask_follows_prediction():
    z_u = one_hot(np.array([3]), 3)
    post = reverse_posterior_discrete(z_u, np.array([[0.2, 0.5, 0.3]]), 1.0, 0.4)
    np.testing.assert_allclose(post, [[0.2, 0.5, 0.3, 0.0]])


def test_posterior_rejects_reversed_times():
    with pytest.raises(ValueError):
        reverse_posterior_discrete(one_hot(np.array([2]), 2), np.array([[0.5, 0.5]]), 0.3, 0.4)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 0.999), st.floats(0, 1), st.integers(0, 10_000))
def test_posterior_rows_are_distributions(alpha_u, frac, seed):
    alpha_s = alpha_u + frac * (1 - alpha_u)
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.ones(4), size=8)
    z_u = one_hot(rng.integers(0, 5, 8), 4)  # index 4 is the mask slot
    post = reverse_posterior_discrete(z_u, probs, alpha_s, alpha_u)
    assert np.all(post >= 0)
    np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-12)


def test_unmask_probabilities_telescope():
    # probability of still being masked after walking the whole grid
    K = 300
    stay = 1.0
    for k in range(K, 0, -1):
        a_u = alpha_disc(k / K, SCHED)[0]
        a_s = alpha_disc((k - 1) / K, SCHED)[0]
        stay *= (1 - a_s) / (1 - a_u)
    assert stay == pytest.approx(0.0, abs=1e-12)


def test_reverse_step_zero_prediction_is_identity():
    zu = np.array([[1.0, -2.0]])
    np.testing.assert_array_equal(reverse_step_continuous(zu, np.zeros_like(zu), 3.0, 1.0), zu)


def test_reverse_step_to_zero_returns_denoised_estimate():
    zu = np.array([[1.0, -2.0]])
    eps_hat = np.array([[0.5, 0.25]])
    np.testing.assert_allclose(reverse_step_continuous(zu, eps_hat, 2.0, 0.0), zu - 2.0 * eps_hat)


def test_reverse_step_rejects_increasing_sigma():
    with pytest.raises(ValueError):
        reverse_step_continuous(np.zeros((1, 1)), np.zeros((1, 1)), 1.0, 1.0)


def test_true_noise_gives_exact_marginal_transport(rng):
    z0 = rng.standard_normal((20_000, 1))
    eps = rng.standard_normal(z0.shape)
    grid = np.linspace(1, 0, 11)
    sigmas = [sigma_cont(u, SCHED) for u in grid] + [0.0]
    z = z0 + sigmas[0] * eps
    for s_u, s_s in zip(sigmas[:-1], sigmas[1:]):
        z = reverse_step_continuous(z, eps, s_u, s_s)
        np.testing.assert_allclose(z, z0 + s_s * eps, rtol=0, atol=1e-9 * max(s_u, 1))
        if s_s > 0:
            assert np.var(z - z0) == pytest.approx(s_s**2, rel=0.05)
