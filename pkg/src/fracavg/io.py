"""CSV and run-record output (UTF-8, 17 significant digits)."""
from __future__ import annotations

import platform
import sys
from pathlib import Path

import numpy as np

from .frac_solver import TrajectoryPair

__all__ = ["format_rows", "write_csv", "write_lines", "write_trajectory", "versions"]


def format_rows(header, data) -> list[str]:
    lines = [",".join(header)]
    for row in np.atleast_2d(data):
        lines.append(",".join(f"{v:.17g}" for v in row))
    return lines


def write_lines(path, lines) -> Path:
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_csv(path, header, data) -> Path:
    return write_lines(path, format_rows(header, data))


def write_trajectory(path, traj: TrajectoryPair) -> Path:
    header, data = traj.table()
    return write_csv(path, header, data)


def versions() -> dict:
    import numba
    import scipy

    from . import __version__

    return {
        "fracavg": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "platform": platform.platform(),
    }
