import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradcheck import numeric_grad
from oracles import cox_nll_bruteforce
from survsynth.survival_loss import SurvLossConfig, cox_weighted_nll, event_weights


def test_two_equal_risks_give_log_two():
    loss, _, has = cox_weighted_nll([0.0, 0.0], [1.0, 2.0], [1, 1])
    assert has
    assert loss == pytest.approx(math.log(2), abs=1e-12)


def test_singleton_risk_set_gives_zero():
    loss, grad, _ = cox_weighted_nll([0.3], [1.0], [1])
    assert loss == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(grad, 0.0, atol=1e-15)


# ln((e + 2) / e) + ln 2, evaluated at 30 digits with mpmath
THREE_SUBJECT_NLL = 1.2445918944919964


def test_three_subject_example():
    loss, _, _ = cox_weighted_nll([1.0, 0.0, 0.0], [1.0, 2.0, 3.0], [1, 1, 0])
    assert loss == pytest.approx(math.log((math.e + 2) / math.e) + math.log(2), abs=1e-12)
    assert loss == pytest.approx(THREE_SUBJECT_NLL, abs=1e-6)


def test_no_events_returns_zero_and_flag():
    loss, grad, has = cox_weighted_nll([0.1, 0.2], [1.0, 2.0], [0, 0])
    assert (loss, has) == (0.0, False)
    assert not grad.any()


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 20), st.integers(0, 10_000), st.floats(-50, 50))
def test_shift_invariance(n, seed, c):
    rng = np.random.default_rng(seed)
    r, t, e = rng.normal(size=n), rng.exponential(size=n), rng.integers(0, 2, n)
    w = rng.uniform(0.1, 1, n)
    a, _, _ = cox_weighted_nll(r, t, e, w)
    b, _, _ = cox_weighted_nll(r + c, t, e, w)
    assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


@pytest.mark.parametrize("seed", range(20))
def test_matches_bruteforce_partial_likelihood(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 21))
    r, t, e = rng.normal(size=n), rng.permutation(n) + 1.0, rng.integers(0, 2, n)
    loss, _, _ = cox_weighted_nll(r, t, e)
    assert loss == pytest.approx(cox_nll_bruteforce(r, t, e), abs=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_ties_and_weights_match_bruteforce(seed):
    rng = np.random.default_rng(100 + seed)
    n = 15
    r, t, e = rng.normal(size=n), rng.integers(1, 5, n).astype(float), rng.integers(0, 2, n)
    w = rng.uniform(0.2, 1.0, n)
    loss, _, _ = cox_weighted_nll(r, t, e, w)
    assert loss == pytest.approx(cox_nll_bruteforce(r, t, e, w), abs=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n = 12
    t, e = rng.integers(1, 6, n).astype(float), rng.integers(0, 2, n)
    e[0] = 1
    w = rng.uniform(0.2, 1.0, n)
    r = rng.normal(size=n)
    _, grad, _ = cox_weighted_nll(r, t, e, w)
    num = numeric_grad(lambda x: cox_weighted_nll(x, t, e, w)[0], r)
    np.testing.assert_allclose(grad, num, rtol=1e-6, atol=1e-9)


def test_extreme_risks_stay_finite():
    r = np.array([800.0, -800.0, 0.0, 700.0])
    loss, grad, _ = cox_weighted_nll(r, [1.0, 2.0, 3.0, 4.0], [1, 1, 1, 0])
    assert np.isfinite(loss) and np.all(np.isfinite(grad))


def test_length_mismatch_rejected():
    with pytest.raises(ValueError):
        cox_weighted_nll([0.0, 1.0], [1.0], [1, 0])


# -- event weights --------------------------------------------------------------


def test_event_weight_values():
    cfg = SurvLossConfig(tau=5.0, alpha_decay=0.5)
    w = event_weights([1.0, 5.0, 7.0], cfg)
    assert w[0] == 1.0 and w[1] == 1.0
    assert w[2] == pytest.approx(math.exp(-1), abs=1e-12)
    assert w[2] == pytest.approx(0.367879, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 1e3), min_size=2, max_size=50))
def test_event_weights_nonincreasing_in_time(times):
    cfg = SurvLossConfig.from_times(times)
    t = np.sort(np.asarray(times))
    w = event_weights(t, cfg)
    assert np.all(np.diff(w) <= 0)
    assert np.all((w > 0) & (w <= 1))


def test_default_config_weights_latest_time_by_inverse_e():
    times = np.arange(1.0, 101.0)
    cfg = SurvLossConfig.from_times(times)
    assert cfg.tau == pytest.approx(np.quantile(times, 0.9))
    assert event_weights([times.max()], cfg)[0] == pytest.approx(math.exp(-1), rel=1e-6)


def test_invalid_config_rejected():
    with pytest.raises(ValueError):
        SurvLossConfig(tau=0.0, alpha_decay=1.0)
    with pytest.raises(ValueError):
        SurvLossConfig(tau=1.0, alpha_decay=-1.0)
