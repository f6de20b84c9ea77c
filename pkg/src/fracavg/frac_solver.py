"""Product-rectangle solvers for Volterra equations with kernel (t-s)^(alpha-1)/Gamma(alpha).

All three solvers share one explicit recursion on a uniform grid ``t_n = n h``::

    X_n = x0 + sum_{j<n} w[n][j] F_j,
    w[n][j] = h^alpha / Gamma(alpha + 1) * ((n-j)^alpha - (n-j-1)^alpha),

where ``F_j`` is the drift evaluated at the left end point ``t_j``. The kernel
is integrated exactly over each cell, so the singularity at ``s = t`` needs no
special treatment. The history sum is accumulated left to right starting from
``x0``; with ``alpha = 1`` (weights exactly ``h``) this reproduces the explicit
Euler recursion bit for bit.

The weights depend on ``n - j`` only, so a table row is a reversed slice of
one length-``N`` array and memory stays O(N).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numba
import numpy as np

from .fast_integrator import STABILITY_FRACTION, StabilityError, _diffusion, check_step
from .mittag_leffler import gamma
from .models import ModelSpec
from .noise import NoisePlan, coarsen, generate_increments

__all__ = [
    "GridSpec",
    "QuadratureWeights",
    "TrajectoryPair",
    "MAX_STEPS",
    "volterra_weights",
    "solve_coupled",
    "solve_auxiliary",
    "solve_averaged",
    "coupled_batch",
    "auxiliary_batch",
    "batch_increments",
    "kernel_difference_constant",
]

MAX_STEPS = 10**6


@dataclass(frozen=True)
class GridSpec:
    T: float
    h: float
    delta: Optional[float] = None
    max_steps: int = MAX_STEPS

    def __post_init__(self):
        if not (self.T > 0 and self.h > 0):
            raise ValueError("T and h must be positive")
        n = round(self.T / self.h)
        if n < 1 or abs(n * self.h - self.T) > 1e-9 * self.T:
            raise ValueError(f"T = {self.T:g} is not an integer multiple of h = {self.h:g}")
        if n > self.max_steps:
            raise ValueError(f"N = {n} steps exceeds the cap of {self.max_steps}")
        if self.delta is not None:
            r = round(self.delta / self.h)
            if r < 1 or abs(r * self.h - self.delta) > 1e-9 * self.delta:
                raise ValueError(f"delta = {self.delta:g} is not a multiple of h = {self.h:g}")
            if n % r:
                raise ValueError(f"delta = {self.delta:g} does not divide T = {self.T:g}")

    @property
    def N(self) -> int:
        return round(self.T / self.h)

    @property
    def delta_ratio(self) -> int:
        """Fine steps per freezing interval (``delta / h``)."""
        if self.delta is None:
            raise ValueError("grid has no freezing mesh delta")
        return round(self.delta / self.h)

    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.h

    def with_delta(self, delta: Optional[float]) -> "GridSpec":
        return GridSpec(self.T, self.h, delta, self.max_steps)


@dataclass(frozen=True)
class QuadratureWeights:
    alpha: float
    h: float
    N: int
    by_lag: np.ndarray  # by_lag[k] = weight for lag n - j = k; by_lag[0] = 0

    def row(self, n: int) -> np.ndarray:
        """``w[n][j]`` for ``j = 0..n-1``."""
        if not 1 <= n <= self.N:
            raise IndexError(f"row {n} outside 1..{self.N}")
        return self.by_lag[n:0:-1]

    def row_sum(self, n: int) -> float:
        return math.fsum(self.row(n))

    def exact_row_sum(self, n: int) -> float:
        return (n * self.h) ** self.alpha / gamma(self.alpha + 1.0)


def _power_increments(alpha: float, N: int) -> np.ndarray:
    # k^a - (k-1)^a without cancellation: k^a * (1 - (1 - 1/k)^a)
    k = np.arange(1, N + 1, dtype=float)
    out = np.empty(N + 1)
    out[0] = 0.0
    if alpha == 1.0:
        out[1:] = 1.0
        return out
    with np.errstate(divide="ignore"):
        out[1:] = k**alpha * -np.expm1(alpha * np.log1p(-1.0 / k))
    out[1] = 1.0
    return out


def volterra_weights(alpha: float, h: float, N: int, *, allow_unit_alpha: bool = False,
                     scale: float = 1.0) -> QuadratureWeights:
    """Exact cell integrals of the kernel for the left-rectangle product rule.

    ``scale`` multiplies all weights (the rescaled-clock formulation uses
    ``eps**alpha``). ``alpha = 1`` is accepted only with ``allow_unit_alpha``.
    """
    if alpha == 1.0 and allow_unit_alpha:
        pass
    elif not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not h > 0.0:
        raise ValueError("h must be positive")
    if N < 1:
        raise ValueError("N must be >= 1")
    coef = h**alpha / gamma(alpha + 1.0)
    if scale != 1.0:
        coef = coef * scale
    by_lag = coef * _power_increments(alpha, N)
    by_lag.setflags(write=False)
    return QuadratureWeights(alpha, h, N, by_lag)


def kernel_difference_constant(alpha: float, beta: float) -> float:
    """Constant ``(1-alpha)^beta 2^(1-beta)`` of the kernel-difference inequality.

    ``|r2^(alpha-1) - r1^(alpha-1)| <= C |r2 - r1|^beta min(r1, r2)^(alpha-beta-1)``
    for ``beta`` in ``[0, alpha]``.
    """
    return (1.0 - alpha) ** beta * 2.0 ** (1.0 - beta)


@numba.njit(cache=True)
def _history(out, x0, by_lag, F, n):
    # out[r] = x0[r] + sum_{i<n} by_lag[n - i] * F[i, r], summed in increasing i
    M = out.shape[0]
    for r in range(M):
        out[r] = x0[r]
    for i in range(n):
        w = by_lag[n - i]
        row = F[i]
        for r in range(M):
            out[r] += w * row[r]


@dataclass
class TrajectoryPair:
    """Samples on a uniform grid; ``y`` is ``None`` for deterministic paths."""

    t: np.ndarray
    x: np.ndarray
    y: Optional[np.ndarray] = None
    label: str = ""

    @property
    def p(self) -> int:
        return self.x.shape[-1]

    def table(self) -> tuple[list[str], np.ndarray]:
        cols = ["t"] + [f"x_{i + 1}" for i in range(self.x.shape[1])]
        parts = [self.t[:, None], self.x]
        if self.y is not None:
            cols += [f"y_{i + 1}" for i in range(self.y.shape[1])]
            parts.append(self.y)
        return cols, np.hstack(parts)


def batch_increments(seed: int, replica_ids, m: int, n: int, h: float,
                     factor: int = 1) -> np.ndarray:
    """Increments for several replicas, stacked as ``(n, R, m)``.

    With ``factor > 1`` the paths are generated on a grid ``factor`` times finer
    and coarsened, so solvers at different resolutions share one Brownian path.
    """
    out = np.empty((n, len(replica_ids), m))
    for r, rid in enumerate(replica_ids):
        dw = generate_increments(NoisePlan(seed, int(rid), m, n * factor, h / factor))
        out[:, r, :] = coarsen(dw, factor) if factor > 1 else dw
    return out


def _plan_increments(plan: NoisePlan, model: ModelSpec, grid: GridSpec) -> np.ndarray:
    if plan.m != model.m:
        raise ValueError(f"noise dimension {plan.m} does not match the model's m = {model.m}")
    if plan.n_fine % grid.N:
        raise ValueError(f"noise grid ({plan.n_fine} steps) does not refine the solver grid ({grid.N})")
    factor = plan.n_fine // grid.N
    if abs(plan.h_fine * factor - grid.h) > 1e-12 * grid.h:
        raise ValueError("noise step size is inconsistent with the solver grid")
    dw = generate_increments(plan)
    return coarsen(dw, factor) if factor > 1 else dw


def _core(model: ModelSpec, weights: QuadratureWeights, h_over_eps: float,
          dw_scaled: np.ndarray, frozen_path: Optional[np.ndarray] = None, stride: int = 1):
    """Shared explicit recursion over a replica batch.

    ``dw_scaled`` has shape ``(N, R, m)`` and already carries the ``1/sqrt(eps)``
    factor. With ``frozen_path`` (shape ``(N+1, R, p)``) the coefficients use
    ``frozen_path[(j // stride) * stride]`` instead of the running ``X_j`` and
    the returned ``X`` is the auxiliary process.
    """
    N, R, _ = dw_scaled.shape
    p, q = model.p, model.q
    X = np.empty((N + 1, R, p))
    Y = np.empty((N + 1, R, q))
    F = np.empty((N, R * p))
    X[0] = model.x0
    Y[0] = model.y0
    x0_flat = np.ascontiguousarray(np.broadcast_to(model.x0, (R, p))).reshape(R * p)
    failed = np.zeros(R, dtype=bool)
    acc = np.empty(R * p)
    by_lag = weights.by_lag
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(N):
            xj = X[j] if frozen_path is None else frozen_path[(j // stride) * stride]
            yj = Y[j]
            F[j] = np.asarray(model.f(xj, yj), dtype=float).reshape(R * p)
            Y[j + 1] = yj + h_over_eps * model.b(xj, yj) + _diffusion(model.sigma(xj, yj), dw_scaled[j])
            _history(acc, x0_flat, by_lag, F, j + 1)
            X[j + 1] = acc.reshape(R, p)
            bad = ~(np.isfinite(Y[j + 1]).all(axis=1) & np.isfinite(X[j + 1]).all(axis=1))
            if bad.any():
                # zero the state of failed replicas so they cannot poison later arithmetic
                failed |= bad
                Y[j + 1][bad] = 0.0
                F[j].reshape(R, p)[bad] = 0.0
                X[j + 1][bad] = 0.0
    return X, Y, failed


def coupled_batch(model: ModelSpec, grid: GridSpec, epsilon: float, dW: np.ndarray, *,
                  weights: Optional[QuadratureWeights] = None, alpha: Optional[float] = None,
                  allow_unit_alpha: bool = False,
                  stability_fraction: float = STABILITY_FRACTION, check: bool = True):
    """Coupled slow-fast solve for a replica batch; returns ``(X, Y, failed)``.

    ``dW`` holds Brownian increments of shape ``(N, R, m)`` on the solver grid.
    """
    alpha = model.alpha if alpha is None else alpha
    if check:
        check_step(model, grid.h, epsilon, stability_fraction)
    if weights is None:
        weights = volterra_weights(alpha, grid.h, grid.N, allow_unit_alpha=allow_unit_alpha)
    _check_weights(weights, grid, alpha)
    return _core(model, weights, grid.h / epsilon, dW / math.sqrt(epsilon))


def auxiliary_batch(model: ModelSpec, grid: GridSpec, epsilon: float, dW: np.ndarray,
                    x_eps: np.ndarray, *, weights: Optional[QuadratureWeights] = None):
    """Auxiliary (delta-frozen) solve for a batch driven by the same ``dW`` as ``x_eps``."""
    if x_eps.shape[0] != grid.N + 1:
        raise ValueError(
            f"slow path has {x_eps.shape[0]} samples but the grid has {grid.N + 1} points"
        )
    if weights is None:
        weights = volterra_weights(model.alpha, grid.h, grid.N)
    _check_weights(weights, grid, model.alpha)
    return _core(model, weights, grid.h / epsilon, dW / math.sqrt(epsilon),
                 frozen_path=x_eps, stride=grid.delta_ratio)


def _check_weights(weights, grid, alpha):
    if weights.N < grid.N or weights.h != grid.h or weights.alpha != alpha:
        raise ValueError("quadrature weights do not match the grid")


def solve_coupled(model: ModelSpec, grid: GridSpec, epsilon: float, noise_plan: NoisePlan, *,
                  clock: str = "slow", alpha: Optional[float] = None,
                  allow_unit_alpha: bool = False,
                  stability_fraction: float = STABILITY_FRACTION) -> TrajectoryPair:
    """One replica of the coupled system on ``grid``.

    ``clock="fast"`` solves the equivalent system on the rescaled clock
    ``tau = t / eps``: kernel weights times ``eps**alpha``, unscaled fast
    equation with step ``h / eps`` driven by ``dW / sqrt(eps)``. Times are then
    reported in ``tau`` units over ``[0, T / eps]``.
    """
    alpha = model.alpha if alpha is None else alpha
    check_step(model, grid.h, epsilon, stability_fraction)
    dw = _plan_increments(noise_plan, model, grid)[:, None, :]
    if clock == "slow":
        X, Y, failed = coupled_batch(model, grid, epsilon, dw, alpha=alpha,
                                     allow_unit_alpha=allow_unit_alpha, check=False)
        t = grid.times()
    elif clock == "fast":
        h_fast = grid.h / epsilon
        weights = volterra_weights(alpha, h_fast, grid.N, allow_unit_alpha=allow_unit_alpha,
                                   scale=epsilon**alpha)
        X, Y, failed = _core(model, weights, h_fast, dw / math.sqrt(epsilon))
        t = np.arange(grid.N + 1) * h_fast
    else:
        raise ValueError(f"clock must be 'slow' or 'fast', got {clock!r}")
    if failed[0]:
        raise StabilityError(f"coupled solve went non-finite (eps = {epsilon:g}, h = {grid.h:g})")
    return TrajectoryPair(t, X[:, 0, :], Y[:, 0, :], label=f"coupled eps={epsilon:g}")


def solve_auxiliary(model: ModelSpec, grid: GridSpec, epsilon: float, noise_plan: NoisePlan,
                    x_eps_path) -> TrajectoryPair:
    """Auxiliary process freezing the *coupled* slow path ``X^eps`` on the mesh ``delta``.

    ``x_eps_path`` is a :class:`TrajectoryPair` or an ``(N+1, p)`` array computed
    on the same grid with the same noise plan.
    """
    if grid.delta is None:
        raise ValueError("grid.delta must be set for the auxiliary system")
    xs = x_eps_path.x if isinstance(x_eps_path, TrajectoryPair) else np.asarray(x_eps_path, dtype=float)
    if xs.shape != (grid.N + 1, model.p):
        raise ValueError(
            f"slow path shape {xs.shape} does not match the grid ({grid.N + 1}, {model.p})"
        )
    check_step(model, grid.h, epsilon)
    dw = _plan_increments(noise_plan, model, grid)[:, None, :]
    X, Y, failed = auxiliary_batch(model, grid, epsilon, dw, xs[:, None, :])
    if failed[0]:
        raise StabilityError(f"auxiliary solve went non-finite (eps = {epsilon:g})")
    return TrajectoryPair(grid.times(), X[:, 0, :], Y[:, 0, :],
                          label=f"auxiliary eps={epsilon:g} delta={grid.delta:g}")


def solve_averaged(fbar: Callable[[np.ndarray], np.ndarray], grid: GridSpec, x0, alpha: float, *,
                   allow_unit_alpha: bool = False,
                   weights: Optional[QuadratureWeights] = None) -> TrajectoryPair:
    """Deterministic solution of ``X = x0 + I^alpha[fbar(X)]`` on ``grid``."""
    x0 = np.array(x0, dtype=float, ndmin=1)
    p = x0.shape[0]
    if weights is None:
        weights = volterra_weights(alpha, grid.h, grid.N, allow_unit_alpha=allow_unit_alpha)
    _check_weights(weights, grid, alpha)
    N = grid.N
    X = np.empty((N + 1, p))
    F = np.empty((N, p))
    X[0] = x0
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(N):
            F[j] = fbar(X[j])
            _history(X[j + 1], x0, weights.by_lag, F, j + 1)
            if not np.all(np.isfinite(X[j + 1])):
                raise FloatingPointError(f"averaged solution is not finite at step {j + 1}")
    return TrajectoryPair(grid.times(), X, None, label="averaged")
