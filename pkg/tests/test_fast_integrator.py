import math

import numpy as np
import pytest

from fracavg.fast_integrator import (
    FastStepParams,
    StabilityError,
    check_step,
    em_step,
    integrate_frozen,
)
from fracavg.frac_solver import GridSpec, batch_increments, coupled_batch, volterra_weights
from fracavg.models import ModelSpec, builtin_models, linear_ou, make_model
from fracavg.noise import NoisePlan, generate_increments


def scalar(b, s, x_free=True):
    sig = lambda x, y: np.full(np.shape(y)[:-1] + (1, 1), s)  # noqa: E731
    return ModelSpec("t", lambda x, y: y, b, sig, 0.5, (1, 1, 1), [0.0], [0.0],
                     x_independent_fast=x_free)


def test_zero_coefficients_step():
    m = scalar(lambda x, y: np.zeros_like(y), 0.0)
    y = np.array([1.7])
    assert np.array_equal(em_step(m, y, FastStepParams(0.1, 0.01, np.zeros(1)), np.array([0.3])), y)


def test_linear_decay_step():
    m = scalar(lambda x, y: -y, 0.0)
    out = em_step(m, np.array([1.0]), FastStepParams(1.0, 0.1, np.zeros(1)), np.array([0.0]))
    assert out[0] == pytest.approx(0.9, abs=1e-15)


def test_step_formula():
    m = linear_ou(mbar=0.5, s=2.0)
    eps, h, y, dw = 0.04, 1e-3, np.array([0.3]), np.array([0.02])
    want = y + (h / eps) * -(y - 0.5) + math.sqrt(2) * 2.0 * dw / math.sqrt(eps)
    got = em_step(m, y, FastStepParams(eps, h, np.zeros(1)), dw)
    assert got == pytest.approx(want, rel=1e-15)


def test_rescaled_clock_bitwise():
    # the eps-scaled step equals the unscaled step with h/eps and dW/sqrt(eps)
    m = make_model("coupled")
    rng = np.random.default_rng(0)
    for _ in range(200):
        eps = rng.uniform(1e-3, 1.0)
        h = eps * rng.uniform(0.01, 0.1)
        y, x = rng.normal(size=1), rng.normal(size=1)
        dw = math.sqrt(h) * rng.normal(size=1)
        # on the clock tau = t/eps the same Brownian increment reads dw / sqrt(eps)
        a = em_step(m, y, FastStepParams(eps, h, x), dw)
        b = em_step(m, y, FastStepParams(1.0, h / eps, x), dw / math.sqrt(eps))
        assert a.tobytes() == b.tobytes()


def test_non_finite_aborts():
    m = scalar(lambda x, y: y**8, 0.0)
    with pytest.raises(StabilityError):
        em_step(m, np.array([1e60]), FastStepParams(1.0, 0.1, np.zeros(1)), np.zeros(1))


def test_step_constraint():
    m = linear_ou()
    check_step(m, 1e-3, 0.01)
    with pytest.raises(StabilityError):
        check_step(m, 2e-3, 0.01)
    with pytest.warns(UserWarning, match="overridden"):
        check_step(m, 2e-3, 0.01, stability_fraction=0.5)


def test_frozen_zero_coefficients_constant():
    m = scalar(lambda x, y: np.zeros_like(y), 0.0)
    traj = integrate_frozen(m, np.zeros(1), np.array([2.5]), 1.0, 0.01,
                            generate_increments(NoisePlan(1, 0, 1, 100, 0.01)), check=False)
    assert traj.shape == (101, 1) and np.all(traj == 2.5)


def test_frozen_batch_shares_noise():
    m = make_model("coupled")
    dw = generate_increments(NoisePlan(2, 0, 1, 50, 0.01))
    xs = np.array([[0.0], [1.0]])
    both = integrate_frozen(m, xs, m.y0, 0.5, 0.01, dw)
    one = integrate_frozen(m, xs[1], m.y0, 0.5, 0.01, dw)
    assert np.array_equal(both[:, 1], one)


@pytest.mark.slow
def test_ou_stationary_variance_scaled():
    # b = -y, sigma = sqrt(2), eps = 0.01, h = 1e-4: stationary variance 1
    m = linear_ou()
    eps, h, n = 0.01, 1e-4, 5000
    grid = GridSpec(n * h, h)
    zero_f = m.with_(f=lambda x, y: np.zeros_like(x))
    burn = int(10 * eps / h)
    chunks = []
    for start in range(0, 1000, 250):
        dw = batch_increments(21, range(start, start + 250), 1, n, h)
        _, Y, bad = coupled_batch(zero_f, grid, eps, dw)
        assert not bad.any()
        chunks.append(Y[burn:, :, 0])
    samples = np.concatenate(chunks, axis=1)
    var_em = 1.0 / (1.0 - h / (2 * eps))
    assert abs(samples.var() - var_em) <= 0.03
    assert abs(samples.var() - 1.0) <= 0.03


@pytest.mark.slow
def test_ou_mean_reversion():
    m = linear_ou(mbar=2.0)
    h, horizon = 0.01, 2000.0
    n = int(horizon / h)
    y = integrate_frozen(m, np.zeros(1), np.zeros(1), horizon, h,
                         generate_increments(NoisePlan(8, 0, 1, n, h)))[:, 0]
    window = y[n // 2:]
    se = math.sqrt(2.0 / (horizon / 2))
    assert abs(window.mean() - 2.0) <= 3 * se


@pytest.mark.slow
def test_exponential_mixing_rate():
    # E[Y(t)] - mbar = (y0 - mbar) exp(-gamma t); fit the rate from replica means
    gamma = 1.0
    m = linear_ou(mbar=0.0)
    h, horizon, R = 0.01, 3.0, 4000
    n = int(horizon / h)
    grid = GridSpec(horizon, h)
    dw = batch_increments(31, range(R), 1, n, h)
    zero_f = m.with_(f=lambda x, y: np.zeros_like(x), y0=np.array([5.0]))
    _, Y, _ = coupled_batch(zero_f, grid, 1.0, dw)
    mean = Y[:, :, 0].mean(axis=1)
    t = grid.times()
    rate = -np.polyfit(t, np.log(mean), 1)[0]
    assert abs(rate - gamma) <= 0.15 * gamma


@pytest.mark.slow
@pytest.mark.parametrize("name", ["linear-ou", "coupled"])
def test_fast_moment_uniform_in_eps(name):
    m = builtin_models()[name]
    T, R = 1.0, 200
    sups = {}
    for eps in (1.0, 0.1, 0.01):
        h = min(1e-3, eps / 20)
        grid = GridSpec(T, h)
        dw = batch_increments(41, range(R), 1, grid.N, h)
        _, Y, bad = coupled_batch(m, grid, eps, dw)
        assert not bad.any()
        sups[eps] = float(np.max(np.mean(Y[..., 0] ** 2, axis=1)))
    # stationary second moment is s^2 (+ kappa^2 for the coupled model)
    assert max(sups.values()) <= 2.0 * 1.25
    assert max(sups.values()) <= 2.0 * max(sups[1.0], 1.0)
