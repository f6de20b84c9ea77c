"""Slow-fast systems with a fractional slow equation: simulation and averaging checks."""

__version__ = "0.1.0"

from .models import ModelSpec, builtin_models, make_model, register_model  # noqa: E402
from .noise import NoisePlan, coarsen, generate_increments  # noqa: E402
from .frac_solver import (  # noqa: E402
    GridSpec,
    TrajectoryPair,
    solve_auxiliary,
    solve_averaged,
    solve_coupled,
    volterra_weights,
)
from .mittag_leffler import linear_averaged_solution, ml  # noqa: E402

__all__ = [
    "ModelSpec",
    "builtin_models",
    "make_model",
    "register_model",
    "NoisePlan",
    "coarsen",
    "generate_increments",
    "GridSpec",
    "TrajectoryPair",
    "solve_auxiliary",
    "solve_averaged",
    "solve_coupled",
    "volterra_weights",
    "linear_averaged_solution",
    "ml",
]
