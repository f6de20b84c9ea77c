import numpy as np
import pytest

from fracavg.averaging import (
    default_settings,
    delta_f,
    estimate_fbar,
    estimate_fbar_many,
    fbar_lipschitz_probe,
    resolve_fbar,
    tabulate_fbar,
)
from fracavg.fast_integrator import integrate_frozen
from fracavg.models import builtin_models, linear_ou, make_model
from fracavg.noise import NoisePlan, generate_increments

BURN, HORIZON, H = 10.0, 200.0, 0.01


def plan(model, seed=1, horizon=HORIZON, h=H):
    return NoisePlan(seed, 0, model.m, int(round(horizon / h)), h)


def test_default_settings():
    s = default_settings(linear_ou())
    assert s == pytest.approx({"burn_in": 10.0, "horizon": 200.0, "h": 0.01})


def test_y_independent_is_exact():
    m = linear_ou().with_(f=lambda x, y: np.sin(x) + 0.0 * y)
    est = estimate_fbar(m, [0.7], BURN, HORIZON, H, plan(m))
    assert est.value[0] == np.sin(0.7)
    assert est.ci_halfwidth[0] == 0.0


@pytest.mark.parametrize("mbar,x,want", [(0.0, 1.0, -1.0), (2.0, 0.0, 2.0)])
def test_linear_ou_values(mbar, x, want):
    m = linear_ou(mbar=mbar)
    est = estimate_fbar(m, [x], BURN, HORIZON, H, plan(m, 3))
    assert est.ci_halfwidth[0] > 0
    assert abs(est.value[0] - want) <= est.ci_halfwidth[0]


def test_settings_validated():
    m = linear_ou()
    with pytest.raises(ValueError):
        estimate_fbar(m, [0.0], 20.0, 10.0, H, plan(m, horizon=10.0))
    with pytest.raises(ValueError, match="noise plan"):
        estimate_fbar(m, [0.0], BURN, HORIZON, H, plan(m, horizon=100.0))


def test_lipschitz_probe_linear():
    m = linear_ou()
    pr = fbar_lipschitz_probe(m, [([0.0], [1.0]), ([-2.0], [0.5])], BURN, HORIZON, H, plan(m))
    # common random numbers cancel the fluctuation exactly for an x-independent fast process
    assert pr.quotient == pytest.approx(1.0, abs=1e-9)


def test_lipschitz_probe_zero():
    m = make_model("zero-drift")
    pr = fbar_lipschitz_probe(m, [([0.0], [1.0])], BURN, HORIZON, H, plan(m))
    assert pr.quotient == 0.0


@pytest.mark.slow
def test_lipschitz_probe_coupled():
    m = make_model("coupled", kappa=0.5)
    xs = np.linspace(-3, 3, 20)
    pairs = [([a], [b]) for a, b in zip(xs[:-1], xs[1:])]
    pr = fbar_lipschitz_probe(m, pairs, BURN, 1000.0, H, plan(m, 4, horizon=1000.0))
    assert pr.quotient <= 0.5 + 3 * pr.ci_halfwidth


def test_delta_f():
    m = linear_ou(mbar=1.5)
    x = np.array([[0.2], [3.0]])
    y = np.array([[4.0], [-1.0]])
    assert np.allclose(delta_f(m, "analytic", x, y), y - 1.5, atol=1e-15)
    y_free = m.with_(f=lambda x, y: -x + 0.0 * y, fbar_analytic=lambda x: -x)
    assert np.all(delta_f(y_free, "analytic", x, y) == 0.0)


def test_resolve_fbar():
    m = linear_ou()
    assert resolve_fbar(m, None) is m.fbar_analytic
    with pytest.raises(ValueError):
        resolve_fbar(m, "bogus")
    with pytest.raises(ValueError, match="no analytic"):
        resolve_fbar(m.with_(fbar_analytic=None), "analytic")


@pytest.mark.slow
@pytest.mark.parametrize("name", ["linear-ou", "coupled", "zero-drift"])
def test_centering(name):
    m = builtin_models()[name]
    xs = np.linspace(-2, 2, 5)[:, None]
    ests = estimate_fbar_many(m, xs, BURN, HORIZON, H, plan(m, 6))
    for e in ests:
        centred = e.value - m.fbar_analytic(e.x)
        assert np.all(np.abs(centred) <= 3 * e.ci_halfwidth + 1e-14)


@pytest.mark.slow
def test_invariant_second_moment_growth():
    m = make_model("coupled", kappa=0.5)
    xs = np.array([[-4.0], [-1.0], [0.0], [1.0], [4.0]])
    y = integrate_frozen(m, xs, m.y0, HORIZON, H, generate_increments(plan(m, 2)))
    second = np.mean(y[int(BURN / H):, :, 0] ** 2, axis=0)
    assert np.all(second <= 2.0 * (1.0 + xs[:, 0] ** 2))


@pytest.mark.slow
def test_ci_shrinks_with_horizon():
    m = linear_ou()
    ratios = []
    for seed in range(8):
        a = estimate_fbar(m, [0.0], BURN, 400.0, H, plan(m, 100 + seed, horizon=400.0))
        b = estimate_fbar(m, [0.0], BURN, 800.0, H, plan(m, 200 + seed, horizon=800.0))
        ratios.append(b.ci_halfwidth[0] / a.ci_halfwidth[0])
    assert abs(np.mean(ratios) - 1 / np.sqrt(2)) <= 0.25 / np.sqrt(2)


def test_tabulated_fbar():
    m = make_model("coupled")
    tab = tabulate_fbar(m, np.linspace(-2, 2, 5), BURN, 100.0, H, seed=3)
    assert tab(np.array([[0.0]])).shape == (1, 1)
    with pytest.raises(ValueError):
        tabulate_fbar(m, [1.0, 0.0], BURN, 100.0, H, seed=3)
