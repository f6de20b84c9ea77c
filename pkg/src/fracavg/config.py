"""Flat ``key = value`` run configuration.

One assignment per line, ``#`` starts a comment, strings may be quoted, lists
are comma separated. Unknown and duplicate keys are errors.
"""
from __future__ import annotations

import inspect
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .models import MODEL_REGISTRY, ModelSpec, make_model

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config", "MODEL_KEYS"]

MODEL_KEYS = ("mbar", "s", "kappa", "x0", "y0")


class ConfigError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    model: str = "linear-ou"
    mbar: Optional[float] = None
    s: Optional[float] = None
    kappa: Optional[float] = None
    x0: Optional[float] = None
    y0: Optional[float] = None
    alpha: float = 0.6
    T: float = 1.0
    h: Optional[float] = None
    delta: Optional[float] = None
    epsilon: float = 0.01
    stability_fraction: float = 0.1
    seed: int = 1
    n_mc: int = 2000
    fbar: str = "analytic"
    allow_estimated_fbar: bool = False
    burn_in: Optional[float] = None
    avg_horizon: Optional[float] = None
    avg_h: Optional[float] = None
    probe_x: list = field(default_factory=lambda: [-2.0, -1.0, 0.0, 1.0, 2.0])
    fbar_grid: list = field(default_factory=lambda: [-3.0 + 0.5 * i for i in range(13)])
    eps_list: list = field(default_factory=lambda: [2.0**-k for k in range(3, 9)])
    delta_list: list = field(default_factory=lambda: [0.1, 0.05, 0.025])
    clock: str = "slow"
    output_points: int = 1000
    max_steps: int = 10**6

    _parsers = {
        "model": str, "fbar": str, "clock": str,
        "seed": int, "n_mc": int, "output_points": int, "max_steps": int,
        "allow_estimated_fbar": _bool,
        "probe_x": _floats, "fbar_grid": _floats, "eps_list": _floats, "delta_list": _floats,
    }

    def __post_init__(self):
        if self.fbar not in ("analytic", "ergodic"):
            raise ConfigError(f"fbar must be 'analytic' or 'ergodic', got {self.fbar!r}")
        if self.clock not in ("slow", "fast"):
            raise ConfigError(f"clock must be 'slow' or 'fast', got {self.clock!r}")
        if self.model not in MODEL_REGISTRY:
            raise ConfigError(f"unknown model {self.model!r}; known: {sorted(MODEL_REGISTRY)}")

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls) if not f.name.startswith("_")]

    def build_model(self) -> ModelSpec:
        factory = MODEL_REGISTRY[self.model]
        accepted = inspect.signature(factory).parameters
        kwargs = {"alpha": self.alpha}
        for key in MODEL_KEYS:
            value = getattr(self, key)
            if value is None:
                continue
            if key not in accepted:
                raise ConfigError(f"model {self.model!r} does not take parameter {key!r}")
            kwargs[key] = value
        try:
            return make_model(self.model, **kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def echo(self) -> list[str]:
        return [f"{k} = {getattr(self, k)!r}" for k in self.keys()]


def parse_config(text: str) -> RunConfig:
    known = set(RunConfig.keys())
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        parse = RunConfig._parsers.get(key, float)
        try:
            values[key] = parse(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
