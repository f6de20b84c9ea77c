"""Seeded Brownian increments with per-replica counter-based streams.

Every replica owns a Philox-4x64 stream keyed by ``(seed, replica_id)``, so
replicas can be generated in any order (or concurrently) with identical
results. Raw 64-bit words become Gaussians through the Box-Muller transform:
two words give two uniforms on the open interval (0, 1) from their top 53
bits, and ``sqrt(-2 log u1) * (cos, sin)(2 pi u2)`` gives a pair of normals.

Increments are rounded to a multiple of a power-of-two quantum sized so that
every partial sum of a path below ``32 sqrt(n h)`` in magnitude (16 standard
deviations of the running maximum) is an exactly representable double. Sums of
increments are then exact in any order and coarsening composes exactly. The
rounding moves an increment by at most ``2**-53 * 32 sqrt(n h)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NoisePlan",
    "NoiseError",
    "generate_increments",
    "increment_quantum",
    "coarsen",
    "DEFAULT_MAX_BYTES",
]

DEFAULT_MAX_BYTES = 1 << 30
_MASK64 = (1 << 64) - 1


class NoiseError(ValueError):
    pass


@dataclass(frozen=True)
class NoisePlan:
    seed: int
    replica_id: int
    m: int
    n_fine: int
    h_fine: float

    def __post_init__(self):
        if self.n_fine < 1:
            raise NoiseError(f"n_fine must be >= 1, got {self.n_fine}")
        if not self.h_fine > 0.0:
            raise NoiseError(f"h_fine must be positive, got {self.h_fine}")
        if self.m < 1:
            raise NoiseError(f"m must be >= 1, got {self.m}")
        if self.replica_id < 0:
            raise NoiseError("replica_id must be nonnegative")

    def for_replica(self, replica_id: int) -> "NoisePlan":
        return NoisePlan(self.seed, replica_id, self.m, self.n_fine, self.h_fine)


def _standard_normals(seed: int, replica_id: int, count: int) -> np.ndarray:
    key = (seed & _MASK64) | ((replica_id & _MASK64) << 64)
    bits = np.random.Philox(key=key).random_raw(2 * ((count + 1) // 2))
    u = ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    u1, u2 = u[0::2], u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    phi = 2.0 * np.pi * u2
    z = np.empty(2 * len(r))
    z[0::2] = r * np.cos(phi)
    z[1::2] = r * np.sin(phi)
    return z[:count]


def increment_quantum(n_fine: int, h_fine: float) -> float:
    bound = 32.0 * math.sqrt(n_fine * h_fine)
    return 2.0 ** (math.ceil(math.log2(bound)) - 53)


def generate_increments(plan: NoisePlan, max_bytes: int = DEFAULT_MAX_BYTES) -> np.ndarray:
    """Brownian increments of shape ``(n_fine, m)`` with variance ``h_fine`` per entry."""
    count = plan.n_fine * plan.m
    if count * 8 > max_bytes:
        raise NoiseError(
            f"{plan.n_fine} x {plan.m} increments need {count * 8} bytes, "
            f"over the memory budget of {max_bytes}"
        )
    z = _standard_normals(plan.seed, plan.replica_id, count)
    quantum = increment_quantum(plan.n_fine, plan.h_fine)
    dw = np.rint(math.sqrt(plan.h_fine) * z / quantum) * quantum
    return dw.reshape(plan.n_fine, plan.m)


def coarsen(increments: np.ndarray, factor: int) -> np.ndarray:
    """Sum blocks of ``factor`` consecutive increments (left to right) along axis 0."""
    increments = np.asarray(increments, dtype=float)
    n = increments.shape[0]
    if factor < 1 or n % factor:
        raise NoiseError(f"factor {factor} does not divide the {n} fine steps")
    if factor == 1:
        return increments.copy()
    blocks = increments.reshape((n // factor, factor) + increments.shape[1:])
    out = blocks[:, 0].copy()
    for k in range(1, factor):
        out += blocks[:, k]
    return out
