"""Averaged coefficient by ergodic time averaging of the frozen fast equation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .fast_integrator import integrate_frozen
from .models import ModelSpec, dissipation_rate
from .noise import NoisePlan, generate_increments

__all__ = [
    "FbarEstimate",
    "LipschitzProbe",
    "TabulatedFbar",
    "N_BATCHES",
    "CI_SIGMAS",
    "default_settings",
    "estimate_fbar",
    "estimate_fbar_many",
    "fbar_lipschitz_probe",
    "tabulate_fbar",
    "delta_f",
    "resolve_fbar",
]

N_BATCHES = 20
CI_SIGMAS = 3.0


@dataclass
class FbarEstimate:
    x: np.ndarray
    value: np.ndarray
    ci_halfwidth: np.ndarray
    burn_in: float
    horizon: float
    h: float


@dataclass
class LipschitzProbe:
    quotient: float
    ci_halfwidth: float
    pair: tuple


def default_settings(model: ModelSpec) -> dict:
    """``burn_in = 10/gamma``, ``horizon = 200/gamma``, ``h = 0.01/gamma``."""
    g = dissipation_rate(model)
    return {"burn_in": 10.0 / g, "horizon": 200.0 / g, "h": 0.01 / g}


def _batch_stats(samples: np.ndarray, n_batches: int):
    """Shifted mean and batch-means half-width along axis 0."""
    n = samples.shape[0] // n_batches * n_batches
    if n == 0:
        raise ValueError(f"need at least {n_batches} samples after burn-in")
    s = samples[samples.shape[0] - n:]
    ref = s[0]
    # centring on the first sample keeps constant inputs exact
    batches = (s - ref).reshape((n_batches, n // n_batches) + s.shape[1:]).mean(axis=1)
    centred = batches.mean(axis=0)
    se = batches.std(axis=0, ddof=1) / math.sqrt(n_batches)
    return ref + centred, CI_SIGMAS * se


def _frozen_samples(model, xs, burn_in, horizon, h, noise_plan):
    if not horizon > burn_in > 0:
        raise ValueError(f"need horizon > burn_in > 0, got burn_in={burn_in}, horizon={horizon}")
    n = int(round(horizon / h))
    if noise_plan.n_fine != n or abs(noise_plan.h_fine - h) > 1e-12 * h:
        raise ValueError("noise plan does not match horizon / h")
    dw = generate_increments(noise_plan)
    traj = integrate_frozen(model, xs, model.y0, horizon, h, dw)  # (n+1, B, q)
    n_burn = int(math.ceil(burn_in / h - 1e-9))
    ys = traj[n_burn:]
    xb = np.broadcast_to(xs, ys.shape[:-1] + (model.p,))
    vals = np.asarray(model.f(xb, ys), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("non-finite coefficient values along the frozen trajectory")
    return vals  # (samples, B, p)


def estimate_fbar_many(model: ModelSpec, xs, burn_in: float, horizon: float, h: float,
                       noise_plan: NoisePlan, n_batches: int = N_BATCHES) -> list[FbarEstimate]:
    """``estimate_fbar`` at several points sharing one noise path."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    vals = _frozen_samples(model, xs, burn_in, horizon, h, noise_plan)
    mean, ci = _batch_stats(vals, n_batches)
    return [FbarEstimate(xs[i].copy(), mean[i], ci[i], burn_in, horizon, h) for i in range(len(xs))]


def estimate_fbar(model: ModelSpec, x, burn_in: float, horizon: float, h: float,
                  noise_plan: NoisePlan, n_batches: int = N_BATCHES) -> FbarEstimate:
    """Time average of ``f(x, Y^x(t))`` over ``[burn_in, horizon]`` along one frozen path.

    The half-width is ``CI_SIGMAS`` standard errors of ``n_batches`` batch means.
    """
    x = np.asarray(x, dtype=float).reshape(model.p)
    return estimate_fbar_many(model, x[None, :], burn_in, horizon, h, noise_plan, n_batches)[0]


def fbar_lipschitz_probe(model: ModelSpec, x_pairs, burn_in: float, horizon: float, h: float,
                         noise_plan: NoisePlan, n_batches: int = N_BATCHES) -> LipschitzProbe:
    """Largest ``|fbar(x2) - fbar(x1)| / |x2 - x1|`` over pairs, with common random numbers.

    The half-width belongs to the maximising pair and comes from batch means of
    the paired difference, which is far tighter than combining two independent
    half-widths.
    """
    pairs = [(np.asarray(a, dtype=float).reshape(model.p), np.asarray(b, dtype=float).reshape(model.p))
             for a, b in x_pairs]
    if not pairs:
        raise ValueError("x_pairs must be nonempty")
    x1 = np.array([a for a, _ in pairs])
    x2 = np.array([b for _, b in pairs])
    dist = np.linalg.norm(x2 - x1, axis=1)
    if np.any(dist == 0.0):
        raise ValueError("pairs must be distinct")
    vals = _frozen_samples(model, np.vstack([x1, x2]), burn_in, horizon, h, noise_plan)
    k = len(pairs)
    diff = vals[:, k:, :] - vals[:, :k, :]
    mean, ci = _batch_stats(diff, n_batches)
    q = np.linalg.norm(mean, axis=1) / dist
    i = int(np.argmax(q))
    return LipschitzProbe(float(q[i]), float(np.linalg.norm(ci[i]) / dist[i]),
                          (x1[i].copy(), x2[i].copy()))


@dataclass
class TabulatedFbar:
    """Piecewise-linear interpolant of estimated ``fbar`` values (scalar slow variable)."""

    x_grid: np.ndarray
    values: np.ndarray
    ci_halfwidth: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.interp(x[..., 0], self.x_grid, self.values)[..., None]


def tabulate_fbar(model: ModelSpec, x_grid, burn_in: float, horizon: float, h: float,
                  seed: int) -> TabulatedFbar:
    if model.p != 1:
        raise ValueError("tabulated fbar supports a scalar slow variable only")
    x_grid = np.asarray(x_grid, dtype=float)
    if np.any(np.diff(x_grid) <= 0):
        raise ValueError("x_grid must be strictly increasing")
    plan = NoisePlan(seed, 0, model.m, int(round(horizon / h)), h)
    ests = estimate_fbar_many(model, x_grid[:, None], burn_in, horizon, h, plan)
    return TabulatedFbar(x_grid, np.array([e.value[0] for e in ests]),
                         np.array([e.ci_halfwidth[0] for e in ests]))


FbarSource = Union[str, Callable[[np.ndarray], np.ndarray]]


def resolve_fbar(model: ModelSpec, fbar_source: Optional[FbarSource] = "analytic"):
    if fbar_source is None or fbar_source == "analytic":
        if model.fbar_analytic is None:
            raise ValueError(f"model {model.name!r} has no analytic averaged coefficient")
        return model.fbar_analytic
    if callable(fbar_source):
        return fbar_source
    raise ValueError(f"unknown fbar source {fbar_source!r}")


def delta_f(model: ModelSpec, fbar_source: FbarSource, x, y) -> np.ndarray:
    """Centred coefficient ``f(x, y) - fbar(x)``."""
    fbar = resolve_fbar(model, fbar_source)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.asarray(model.f(x, y), dtype=float) - np.asarray(fbar(x), dtype=float)
