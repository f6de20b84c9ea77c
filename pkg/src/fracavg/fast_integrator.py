"""Explicit Euler-Maruyama stepping of the fast equation.

The scaled step is ``y + (h/eps) b(x, y) + sigma(x, y) (dW / sqrt(eps))``; with
``eps = 1`` it is the plain step of the frozen equation. Writing the diffusion
as ``sigma @ (dW / sqrt(eps))`` makes the scaled step bitwise equal to the
unscaled step with clock ``h/eps`` and increment ``dW / sqrt(eps)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .models import ModelSpec, dissipation_rate

__all__ = [
    "FastStepParams",
    "StabilityError",
    "STABILITY_FRACTION",
    "max_stable_step",
    "check_step",
    "em_step",
    "integrate_frozen",
]

STABILITY_FRACTION = 0.1


class StabilityError(FloatingPointError):
    """Non-finite state, or a step too large for the fast time scale."""


@dataclass(frozen=True)
class FastStepParams:
    epsilon: float
    h: float
    x_frozen: np.ndarray

    def __post_init__(self):
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.h > 0.0:
            raise ValueError(f"h must be positive, got {self.h}")


def max_stable_step(gamma: float, epsilon: float,
                    stability_fraction: float = STABILITY_FRACTION) -> float:
    return stability_fraction * epsilon / gamma


def check_step(model: ModelSpec, h: float, epsilon: float,
               stability_fraction: float = STABILITY_FRACTION) -> None:
    """Raise :class:`StabilityError` unless ``h <= stability_fraction * eps / gamma``."""
    if stability_fraction != STABILITY_FRACTION:
        warnings.warn(
            f"stability_fraction overridden to {stability_fraction} (default {STABILITY_FRACTION})",
            stacklevel=2,
        )
    gamma = dissipation_rate(model)
    if gamma <= 0.0:
        raise StabilityError(f"model {model.name!r} is not dissipative (gamma_est = {gamma:g})")
    limit = max_stable_step(gamma, epsilon, stability_fraction)
    if h > limit * (1 + 1e-12):
        raise StabilityError(
            f"step h = {h:g} exceeds {stability_fraction:g} * eps / gamma = {limit:g} "
            f"(eps = {epsilon:g}, gamma = {gamma:g})"
        )


def _diffusion(sig: np.ndarray, dw: np.ndarray) -> np.ndarray:
    if sig.shape[-2:] == (1, 1):
        return sig[..., 0] * dw
    return np.einsum("...ij,...j->...i", sig, dw)


def _advance(model: ModelSpec, x, y, h_over_eps, dw_scaled):
    return y + h_over_eps * model.b(x, y) + _diffusion(model.sigma(x, y), dw_scaled)


def em_step(model: ModelSpec, y: np.ndarray, params: FastStepParams, dW: np.ndarray) -> np.ndarray:
    """One Euler-Maruyama step of the ``eps``-scaled fast equation."""
    y = np.asarray(y, dtype=float)
    dw_scaled = np.asarray(dW, dtype=float) / math.sqrt(params.epsilon)
    with np.errstate(over="ignore", invalid="ignore"):
        out = _advance(model, np.asarray(params.x_frozen, dtype=float), y,
                       params.h / params.epsilon, dw_scaled)
    if not np.all(np.isfinite(out)):
        raise StabilityError(
            f"non-finite fast state after a step with h = {params.h:g}, eps = {params.epsilon:g}"
        )
    return out


def integrate_frozen(model: ModelSpec, x, y_init, horizon: float, h: float,
                     noise: np.ndarray, *, check: bool = True) -> np.ndarray:
    """Trajectory of the frozen fast equation ``dY = b(x, Y) dt + sigma(x, Y) dB``.

    ``x`` may be a single point ``(p,)`` or a batch ``(B, p)``; all batch members
    share the increments ``noise`` of shape ``(n, m)`` (common random numbers).
    Returns an array ``(n + 1, q)`` or ``(n + 1, B, q)``.
    """
    n = int(round(horizon / h))
    if n < 1 or abs(n * h - horizon) > 1e-9 * horizon:
        raise ValueError(f"horizon {horizon:g} is not a multiple of h = {h:g}")
    noise = np.asarray(noise, dtype=float)
    if noise.shape != (n, model.m):
        raise ValueError(f"noise has shape {noise.shape}, expected {(n, model.m)}")
    if check:
        check_step(model, h, 1.0)
    x = np.asarray(x, dtype=float)
    batched = x.ndim == 2
    xb = x if batched else x[None, :]
    y = np.broadcast_to(np.asarray(y_init, dtype=float), (len(xb), model.q)).copy()
    traj = np.empty((n + 1,) + y.shape)
    traj[0] = y
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(n):
            dw = np.broadcast_to(noise[j], (len(xb), model.m))
            y = _advance(model, xb, y, h, dw)
            if not np.all(np.isfinite(y)):
                raise StabilityError(f"non-finite frozen fast state at step {j + 1} (h = {h:g})")
            traj[j + 1] = y
    return traj if batched else traj[:, 0, :]
