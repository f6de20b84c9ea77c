"""Model specifications, the benchmark catalogue and assumption probes.

Coefficient maps are vectorised over leading batch axes::

    f(x[..., p], y[..., q])     -> [..., p]
    b(x[..., p], y[..., q])     -> [..., q]
    sigma(x[..., p], y[..., q]) -> [..., q, m]

Models are selected by name. New models are added with :func:`register_model`,
whose factory receives the numeric config parameters as keyword arguments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.stats import qmc

__all__ = [
    "ModelSpec",
    "AssumptionReport",
    "AssumptionError",
    "probe_lipschitz",
    "probe_dissipativity",
    "default_lipschitz_probes",
    "default_dissipativity_probes",
    "dissipation_rate",
    "check_x_independence",
    "builtin_models",
    "register_model",
    "make_model",
    "MODEL_REGISTRY",
]

CoefficientMap = Callable[[np.ndarray, np.ndarray], np.ndarray]

DEFAULT_BOX = 5.0
DEFAULT_PROBES = 10_000
VIOLATION_MARGIN = 1e-12


class AssumptionError(ValueError):
    """A coefficient map misbehaved at a probe point."""

    def __init__(self, message: str, probe=None):
        super().__init__(message)
        self.probe = probe


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float, ndmin=1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ModelSpec:
    name: str
    f: CoefficientMap
    b: CoefficientMap
    sigma: CoefficientMap
    alpha: float
    dims: tuple[int, int, int]
    x0: np.ndarray
    y0: np.ndarray
    fbar_analytic: Optional[Callable[[np.ndarray], np.ndarray]] = None
    x_independent_fast: bool = False
    params: dict = field(default_factory=dict)
    notes: str = ""

    def __post_init__(self):
        p, q, m = self.dims
        if min(p, q, m) < 1:
            raise ValueError(f"dimensions must be positive, got {self.dims}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        object.__setattr__(self, "x0", _frozen(self.x0))
        object.__setattr__(self, "y0", _frozen(self.y0))
        if self.x0.shape != (p,) or self.y0.shape != (q,):
            raise ValueError("initial data do not match the declared dimensions")

    @property
    def p(self) -> int:
        return self.dims[0]

    @property
    def q(self) -> int:
        return self.dims[1]

    @property
    def m(self) -> int:
        return self.dims[2]

    def with_(self, **changes) -> "ModelSpec":
        """Copy with some fields replaced (``alpha``, ``x0``, ...)."""
        return replace(self, **changes)


@dataclass
class AssumptionReport:
    lipschitz_f_est: Optional[float] = None
    lipschitz_b_est: Optional[float] = None
    lipschitz_sigma_est: Optional[float] = None
    gamma_est: Optional[float] = None
    probe_count: int = 0
    max_violation: Optional[float] = None

    @property
    def admissible(self) -> bool:
        return self.gamma_est is not None and self.gamma_est > VIOLATION_MARGIN


def _norm(v: np.ndarray, nd: int) -> np.ndarray:
    # Euclidean / Frobenius norm over the trailing ``nd`` axes
    axes = tuple(range(-nd, 0))
    return np.sqrt(np.sum(v * v, axis=axes))


def _check_finite(name, values, x, y):
    bad = ~np.isfinite(values.reshape(values.shape[0], -1)).all(axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        probe = (x[i].tolist(), y[i].tolist())
        raise AssumptionError(f"{name} is not finite at probe x={probe[0]}, y={probe[1]}", probe)


def probe_lipschitz(model: ModelSpec, probes) -> AssumptionReport:
    """Largest finite-difference quotient of ``f``, ``b`` and ``sigma`` over probe pairs.

    ``probes`` is a sequence of ``((x1, y1), (x2, y2))`` pairs or a tuple of four
    arrays ``(x1, y1, x2, y2)`` with leading axis over probes. The estimate is a
    lower bound on the true Lipschitz constant.
    """
    x1, y1, x2, y2 = _unpack_pairs(model, probes)
    denom = _norm(x2 - x1, 1) + _norm(y2 - y1, 1)
    if np.any(denom == 0.0):
        raise ValueError("probe pairs must have distinct points")
    out = {}
    for name, fn, nd in (("f", model.f, 1), ("b", model.b, 1), ("sigma", model.sigma, 2)):
        v1 = np.asarray(fn(x1, y1), dtype=float)
        v2 = np.asarray(fn(x2, y2), dtype=float)
        _check_finite(name, v1, x1, y1)
        _check_finite(name, v2, x2, y2)
        out[name] = float(np.max(_norm(v2 - v1, nd) / denom))
    return AssumptionReport(
        lipschitz_f_est=out["f"],
        lipschitz_b_est=out["b"],
        lipschitz_sigma_est=out["sigma"],
        probe_count=len(denom),
    )


def _unpack_pairs(model, probes):
    p, q = model.p, model.q
    if isinstance(probes, tuple) and len(probes) == 4 and np.ndim(probes[0]) == 2:
        x1, y1, x2, y2 = (np.asarray(a, dtype=float) for a in probes)
    else:
        probes = list(probes)
        if not probes:
            raise ValueError("probes must be nonempty")
        x1 = np.array([np.atleast_1d(a[0][0]) for a in probes], dtype=float)
        y1 = np.array([np.atleast_1d(a[0][1]) for a in probes], dtype=float)
        x2 = np.array([np.atleast_1d(a[1][0]) for a in probes], dtype=float)
        y2 = np.array([np.atleast_1d(a[1][1]) for a in probes], dtype=float)
    if len(x1) == 0:
        raise ValueError("probes must be nonempty")
    if x1.shape[1] != p or y1.shape[1] != q:
        raise ValueError("probe dimensions do not match the model")
    return x1, y1, x2, y2


def probe_dissipativity(model: ModelSpec, x_probes, y_pairs) -> AssumptionReport:
    """Estimate the dissipation rate ``gamma`` of ``b(x, .)``, ``sigma(x, .)``.

    Every ``x`` in ``x_probes`` is combined with every ``(y1, y2)`` pair, and
    ``gamma_est`` is the infimum of::

        -(<b(x,y2) - b(x,y1), y2 - y1> + |sigma(x,y2) - sigma(x,y1)|^2 / 2) / |y2 - y1|^2

    ``max_violation`` is the most negative margin found (0 when none is).
    """
    xs = np.atleast_2d(np.asarray(x_probes, dtype=float))
    if xs.shape[1] != model.p:
        xs = xs.reshape(-1, model.p)
    y1, y2 = y_pairs
    y1 = np.asarray(y1, dtype=float).reshape(-1, model.q)
    y2 = np.asarray(y2, dtype=float).reshape(-1, model.q)
    dy = y2 - y1
    dist2 = np.sum(dy * dy, axis=-1)
    if np.any(dist2 == 0.0):
        raise ValueError("y pairs must be distinct")

    gamma = math.inf
    for x in xs:
        xb = np.broadcast_to(x, (len(y1), model.p))
        b1, b2 = model.b(xb, y1), model.b(xb, y2)
        s1, s2 = model.sigma(xb, y1), model.sigma(xb, y2)
        for name, v, yy in (("b", b1, y1), ("b", b2, y2), ("sigma", s1, y1), ("sigma", s2, y2)):
            _check_finite(name, np.asarray(v), xb, yy)
        ds = s2 - s1
        lhs = np.sum((b2 - b1) * dy, axis=-1) + 0.5 * np.sum(ds * ds, axis=(-2, -1))
        ratio = -lhs / dist2
        gamma = min(gamma, float(np.min(ratio)))
    return AssumptionReport(
        gamma_est=gamma,
        probe_count=len(xs) * len(y1),
        max_violation=min(gamma, 0.0) if gamma < VIOLATION_MARGIN else 0.0,
    )


def _sobol(d: int, n: int, box: float) -> np.ndarray:
    # unscrambled, so probe sets are reproducible; first point is the box centre
    m = int(math.ceil(math.log2(max(n, 2))))
    pts = qmc.Sobol(d, scramble=False).random_base2(m)[:n]
    return box * (2.0 * pts - 1.0)


def default_lipschitz_probes(model: ModelSpec, n: int = DEFAULT_PROBES, box: float = DEFAULT_BOX,
                             step: float = 1e-3):
    """Deterministic low-discrepancy probe pairs in ``[-box, box]^(p+q)``.

    Each base point is paired with a neighbour displaced by ``step`` along a
    Sobol-chosen direction, which keeps the quotient close to a local derivative.
    """
    p, q = model.p, model.q
    base = _sobol(p + q, n + 1, box)[1:]
    dirs = _sobol(p + q, n + 1, 1.0)[1:] + 1e-3
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    other = base + step * dirs
    return base[:, :p], base[:, p:], other[:, :p], other[:, p:]


def default_dissipativity_probes(model: ModelSpec, n: int = DEFAULT_PROBES, box: float = DEFAULT_BOX):
    """Return ``(x_probes, (y1, y2))``: 32 Sobol ``x`` values times ``n // 32`` y pairs."""
    p, q = model.p, model.q
    nx = 32
    ny = max(1, n // nx)
    xs = _sobol(p, nx + 1, box)[1:]
    pts = _sobol(2 * q, ny + 1, box)[1:]
    y1, y2 = pts[:, :q], pts[:, q:]
    keep = np.any(y1 != y2, axis=1)
    return xs, (y1[keep], y2[keep])


_gamma_cache: dict[int, tuple[ModelSpec, float]] = {}


def dissipation_rate(model: ModelSpec) -> float:
    """``gamma_est`` on the default probe set, memoised per model instance."""
    hit = _gamma_cache.get(id(model))
    if hit is not None and hit[0] is model:
        return hit[1]
    xs, pairs = default_dissipativity_probes(model)
    g = probe_dissipativity(model, xs, pairs).gamma_est
    _gamma_cache[id(model)] = (model, g)
    return g


def check_x_independence(model: ModelSpec, n: int = 100, seed: int = 0) -> bool:
    """Bitwise check that ``b`` and ``sigma`` ignore ``x`` at random probes."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-DEFAULT_BOX, DEFAULT_BOX, (n, model.p))
    y = rng.uniform(-DEFAULT_BOX, DEFAULT_BOX, (n, model.q))
    zero = np.zeros_like(x)
    return bool(
        np.array_equal(model.b(x, y), model.b(zero, y))
        and np.array_equal(model.sigma(x, y), model.sigma(zero, y))
    )


# -- benchmark catalogue ----------------------------------------------------------


def _const_sigma(value: float):
    def sigma(x, y):
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1])
        return np.full(shape + (1, 1), value)

    return sigma


def linear_ou(alpha: float = 0.6, mbar: float = 0.0, s: float = 1.0,
              x0: float = 1.0, y0: Optional[float] = None) -> ModelSpec:
    """M1: ``f = -x + y``, ``b = -(y - mbar)``, ``sigma = sqrt(2) s``.

    The fast process is an OU process independent of ``x`` with invariant law
    ``N(mbar, s**2)`` and dissipation rate 1, so ``fbar(x) = -x + mbar``.
    """
    y0 = mbar if y0 is None else y0
    sig = math.sqrt(2.0) * s

    def f(x, y):
        return -x + y

    def b(x, y):
        return -(y - mbar)

    def fbar(x):
        return -np.asarray(x, dtype=float) + mbar

    return ModelSpec(
        name="linear-ou", f=f, b=b, sigma=_const_sigma(sig), alpha=alpha, dims=(1, 1, 1),
        x0=[x0], y0=[y0], fbar_analytic=fbar, x_independent_fast=True,
        params={"mbar": mbar, "s": s},
        notes="invariant law N(mbar, s^2); gamma = 1; fbar(x) = -x + mbar",
    )


def coupled(alpha: float = 0.6, kappa: float = 0.5, s: float = 1.0,
            x0: float = 1.0, y0: float = 0.0) -> ModelSpec:
    """M2: ``f = y``, ``b = -y + kappa tanh(x)``, ``sigma = sqrt(2) s``.

    For frozen ``x`` the fast process is OU around ``kappa tanh(x)``, hence
    ``fbar(x) = kappa tanh(x)``; gamma = 1. The fast process depends on ``x``.
    """
    sig = math.sqrt(2.0) * s

    def f(x, y):
        return np.array(y, dtype=float)

    def b(x, y):
        return -y + kappa * np.tanh(x)

    def fbar(x):
        return kappa * np.tanh(np.asarray(x, dtype=float))

    return ModelSpec(
        name="coupled", f=f, b=b, sigma=_const_sigma(sig), alpha=alpha, dims=(1, 1, 1),
        x0=[x0], y0=[y0], fbar_analytic=fbar, x_independent_fast=False,
        params={"kappa": kappa, "s": s},
        notes="frozen law N(kappa tanh x, s^2); gamma = 1; fbar(x) = kappa tanh(x)",
    )


def zero_drift(alpha: float = 0.6, s: float = 1.0, x0: float = 1.0, y0: float = 0.0) -> ModelSpec:
    """M3: ``f = 0`` with an OU fast process; the slow path stays at ``x0``."""
    sig = math.sqrt(2.0) * s

    def f(x, y):
        return np.zeros_like(x, dtype=float)

    def b(x, y):
        return -np.asarray(y, dtype=float)

    def fbar(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    return ModelSpec(
        name="zero-drift", f=f, b=b, sigma=_const_sigma(sig), alpha=alpha, dims=(1, 1, 1),
        x0=[x0], y0=[y0], fbar_analytic=fbar, x_independent_fast=True,
        params={"s": s},
        notes="X == x0 for every epsilon",
    )


MODEL_REGISTRY: dict[str, Callable[..., ModelSpec]] = {
    "linear-ou": linear_ou,
    "coupled": coupled,
    "zero-drift": zero_drift,
}


def register_model(name: str, factory: Callable[..., ModelSpec]) -> None:
    """Make ``factory`` selectable as ``model = "<name>"`` in config files."""
    if name in MODEL_REGISTRY:
        raise ValueError(f"model {name!r} is already registered")
    MODEL_REGISTRY[name] = factory


def make_model(name: str, **params) -> ModelSpec:
    try:
        factory = MODEL_REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; known: {sorted(MODEL_REGISTRY)}") from None
    return factory(**params)


def builtin_models(alpha: float = 0.6) -> dict[str, ModelSpec]:
    """Benchmark catalogue with default parameters."""
    return {
        "linear-ou": linear_ou(alpha=alpha),
        "coupled": coupled(alpha=alpha),
        "zero-drift": zero_drift(alpha=alpha),
    }
