"""Monte Carlo harness for the averaging error and its rate in epsilon."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import hyperu

from .averaging import resolve_fbar
from .frac_solver import (
    GridSpec,
    auxiliary_batch,
    batch_increments,
    coupled_batch,
    solve_averaged,
    volterra_weights,
)
from .mittag_leffler import gamma as gamma_fn
from .models import ModelSpec

__all__ = [
    "ErrorRow",
    "ErrorTable",
    "RateEstimate",
    "IntegralScaling",
    "AuxiliarySweep",
    "MAX_FAILED_FRACTION",
    "CI_Z",
    "default_step",
    "output_indices",
    "mse_vs_epsilon",
    "fit_rate",
    "fit_power_law",
    "integral_I",
    "check_integral_scaling",
    "auxiliary_error_sweep",
    "holder_ratios",
]

MAX_FAILED_FRACTION = 0.01
CI_Z = 1.96
CHUNK = 256
OUTPUT_POINTS = 1000


def default_step(epsilon: float, T: float = 1.0, h_max: float = 1e-3) -> float:
    """``min(h_max, eps/20)`` rounded down so that ``T / h`` is an integer."""
    h = min(h_max, epsilon / 20.0)
    return T / math.ceil(T / h - 1e-9)


def output_indices(N: int, max_points: int = OUTPUT_POINTS) -> np.ndarray:
    """At most ``max_points + 1`` evenly strided grid indices including both ends."""
    stride = max(1, math.ceil(N / max_points))
    idx = np.arange(0, N + 1, stride)
    if idx[-1] != N:
        idx = np.append(idx, N)
    return idx


@dataclass
class ErrorRow:
    epsilon: float
    h: float
    mse_sup: float
    ci_halfwidth: float
    t_argmax: float
    n_mc: int
    n_failed: int
    moment_sup: float

    @property
    def valid(self) -> bool:
        return self.n_failed <= MAX_FAILED_FRACTION * self.n_mc


@dataclass
class ErrorTable:
    rows: list[ErrorRow]
    metadata: dict = field(default_factory=dict)

    COLUMNS = ("epsilon", "h", "mse_sup", "ci_halfwidth", "t_argmax", "n_mc", "n_failed",
               "valid", "moment_sup")

    def __post_init__(self):
        self.rows.sort(key=lambda r: -r.epsilon)

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([r.epsilon for r in self.rows])

    @property
    def mse(self) -> np.ndarray:
        return np.array([r.mse_sup for r in self.rows])

    def moment_uniform(self, factor: float = 2.0) -> bool:
        """Second moments across rows stay within ``factor`` of the largest-eps row."""
        m = np.array([r.moment_sup for r in self.rows])
        return bool(np.all(m <= factor * m[0]))

    def csv_lines(self) -> list[str]:
        lines = [",".join(self.COLUMNS)]
        for r in self.rows:
            lines.append(",".join([
                f"{r.epsilon:.17g}", f"{r.h:.17g}", f"{r.mse_sup:.17g}", f"{r.ci_halfwidth:.17g}",
                f"{r.t_argmax:.17g}", str(r.n_mc), str(r.n_failed), str(int(r.valid)),
                f"{r.moment_sup:.17g}",
            ]))
        return lines


def mse_vs_epsilon(model: ModelSpec, T: float, eps_list: Sequence[float], n_mc: int, seed: int, *,
                   h: Optional[Callable[[float], float] | float] = None,
                   fbar_source="analytic", chunk: int = CHUNK,
                   output_points: int = OUTPUT_POINTS) -> ErrorTable:
    """Monte Carlo estimate of ``sup_t E|X^eps(t) - Xbar(t)|^2`` for each epsilon.

    Replica ``r`` uses the noise stream ``(seed, r)`` in every row. ``Xbar`` is
    solved once per row, with the same step as the coupled system, so the
    quadrature bias largely cancels in the difference. The half-width is
    ``CI_Z`` replica standard errors at the maximising time.
    """
    fbar = resolve_fbar(model, fbar_source)
    rows = []
    for eps in eps_list:
        step = default_step(eps, T) if h is None else (h(eps) if callable(h) else h)
        grid = GridSpec(T, step)
        w = volterra_weights(model.alpha, grid.h, grid.N)
        xbar = solve_averaged(fbar, grid, model.x0, model.alpha, weights=w).x
        idx = output_indices(grid.N, output_points)
        err2 = np.empty((n_mc, len(idx)))
        mom = np.empty((n_mc, len(idx)))
        failed = np.zeros(n_mc, dtype=bool)
        for start in range(0, n_mc, chunk):
            ids = range(start, min(start + chunk, n_mc))
            dw = batch_increments(seed, ids, model.m, grid.N, grid.h)
            X, Y, bad = coupled_batch(model, grid, eps, dw, weights=w)
            Xs, Ys = X[idx], Y[idx]
            d = Xs - xbar[idx][:, None, :]
            err2[ids.start:ids.stop] = np.sum(d * d, axis=-1).T
            mom[ids.start:ids.stop] = (np.sum(Xs * Xs, axis=-1) + np.sum(Ys * Ys, axis=-1)).T
            failed[ids.start:ids.stop] = bad
        ok = ~failed
        n_ok = int(ok.sum())
        if n_ok >= 2:
            mean = err2[ok].mean(axis=0)
            k = int(np.argmax(mean))
            ci = CI_Z * err2[ok, k].std(ddof=1) / math.sqrt(n_ok)
            mse_sup, moment_sup = float(mean[k]), float(mom[ok].mean(axis=0).max())
        else:
            k, ci, mse_sup, moment_sup = 0, math.nan, math.nan, math.nan
        rows.append(ErrorRow(float(eps), grid.h, mse_sup, float(ci), float(idx[k] * grid.h),
                             n_mc, int(failed.sum()), moment_sup))
    meta = {"model": model.name, "alpha": model.alpha, "T": T, "seed": seed, "n_mc": n_mc,
            "x0": model.x0.tolist(), "y0": model.y0.tolist(), **model.params}
    return ErrorTable(rows, meta)


@dataclass
class RateEstimate:
    slope: float
    intercept: float
    r_squared: float
    residuals: np.ndarray
    leverage: np.ndarray
    x: np.ndarray
    y: np.ndarray
    notes: list[str] = field(default_factory=list)


def fit_power_law(x, y, *, min_points: int = 2, min_span: float = 1.0) -> RateEstimate:
    """Least squares line through ``(log x, log y)``; nonpositive ``y`` are dropped with a note."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    notes = []
    keep = np.isfinite(y) & (y > 0)
    if not keep.all():
        notes.append(f"excluded {int((~keep).sum())} nonpositive or missing values")
    x, y = x[keep], y[keep]
    if len(x) < min_points:
        raise ValueError(f"need at least {min_points} usable points, have {len(x)}")
    if x.max() / x.min() < min_span:
        raise ValueError(f"points span a factor {x.max() / x.min():g} < {min_span:g}")
    lx, ly = np.log(x), np.log(y)
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    fitted = A @ np.array([slope, intercept])
    resid = ly - fitted
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    xc = lx - lx.mean()
    lev = 1.0 / len(lx) + xc**2 / np.sum(xc**2)
    return RateEstimate(float(slope), float(intercept), r2, resid, lev, x, y, notes)


def fit_rate(table: ErrorTable) -> RateEstimate:
    """Slope of ``log sqrt(mse_sup)`` against ``log eps`` over valid rows.

    Needs at least four usable rows spanning a factor of 16 in epsilon.
    """
    rows = [r for r in table.rows if r.valid]
    eps = np.array([r.epsilon for r in rows])
    mse = np.array([r.mse_sup for r in rows])
    if len(rows) < len(table.rows):
        note = [f"excluded {len(table.rows) - len(rows)} invalid rows"]
    else:
        note = []
    with np.errstate(invalid="ignore"):
        root = np.where(mse > 0, np.sqrt(np.where(mse > 0, mse, 1.0)), mse)
    est = fit_power_law(eps, root, min_points=4, min_span=16.0)
    est.notes = note + est.notes
    return est


# -- deterministic integral scaling ---------------------------------------------------


def integral_I(alpha: float, gamma: float, eps: float, t: float, cells_per_scale: int = 40,
               min_cells: int = 2000, check: bool = True) -> float:
    """``I(t) = int_0^t int_{s1}^t (t-s1)^(a-1) (t-s2)^(a-1) exp(-gamma (s2-s1)/eps) ds2 ds1``.

    With ``theta = t - s2`` and ``z = s2 - s1`` the inner ``z`` integral has the
    closed form ``lam^-a [U(1-a,1-a,lam theta) - exp(-lam (t-theta)) U(1-a,1-a,lam t)]``
    (``lam = gamma/eps``, ``U`` the confluent hypergeometric function). It
    behaves like ``c0 - c1 theta^a`` near ``theta = 0``, so the outer integral
    uses cells that are uniform in ``v = theta^a``: each cell carries the exact
    kernel mass ``int theta^(a-1) dtheta`` and the smooth factor is taken at the
    cell midpoint in ``v``. The widest cell, next to ``theta = t``, is at most
    ``eps/gamma`` over ``cells_per_scale`` wide.
    """
    if t <= 0:
        return 0.0
    lam = gamma / eps
    M = max(min_cells, math.ceil(t * lam * cells_per_scale / alpha))
    ta = t**alpha
    dv = ta / M
    W = np.full(M, dv / alpha)
    if check:
        total = math.fsum(W)
        exact = ta / alpha
        if abs(total - exact) > 1e-8 * exact:
            raise ValueError(
                f"kernel cell weights violate the row-sum identity ({total!r} vs {exact!r}); "
                "resolution too coarse"
            )
        widest = t - ((M - 1) * dv) ** (1.0 / alpha)
        if widest * lam > 0.25:
            raise ValueError("resolution too coarse for the exponential scale eps/gamma")
    theta = ((np.arange(M) + 0.5) * dv) ** (1.0 / alpha)
    a = 1.0 - alpha
    with np.errstate(under="ignore"):
        G = lam ** (-alpha) * (hyperu(a, a, lam * theta) - np.exp(-lam * (t - theta)) * hyperu(a, a, lam * t))
    return float(W @ G)


@dataclass
class IntegralScaling:
    alpha: float
    gamma: float
    T: float
    eps: np.ndarray
    sup_I: np.ndarray
    t_argmax: np.ndarray
    bound: np.ndarray
    fit: RateEstimate

    @property
    def slope(self) -> float:
        return self.fit.slope

    @property
    def bound_holds(self) -> bool:
        return bool(np.all(self.sup_I <= self.bound))


def _sup_over_t(fn, T, n_coarse=60, n_fine=40):
    ts = np.linspace(T / n_coarse, T, n_coarse)
    vals = np.array([fn(t) for t in ts])
    k = int(np.argmax(vals))
    lo = ts[max(k - 1, 0)] if k > 0 else T / (4 * n_coarse)
    hi = ts[min(k + 1, n_coarse - 1)]
    tf = np.linspace(lo, hi, n_fine)
    vf = np.array([fn(t) for t in tf])
    j = int(np.argmax(vf))
    if vf[j] >= vals[k]:
        return float(vf[j]), float(tf[j])
    return float(vals[k]), float(ts[k])


def check_integral_scaling(alpha: float, gamma: float, T: float, eps_list: Sequence[float],
                           cells_per_scale: int = 40) -> IntegralScaling:
    """``sup_t I(t)`` for each epsilon, its log-log slope, and the bound
    ``(T^a / a) Gamma(a) (eps/gamma)^a`` checked pointwise."""
    eps = np.asarray(sorted(eps_list, reverse=True), dtype=float)
    sups, targ = [], []
    for e in eps:
        s, t = _sup_over_t(lambda tt: integral_I(alpha, gamma, e, tt, cells_per_scale), T)
        sups.append(s)
        targ.append(t)
    sups = np.array(sups)
    bound = T**alpha / alpha * gamma_fn(alpha) * (eps / gamma) ** alpha
    fit = fit_power_law(eps, sups, min_points=2)
    return IntegralScaling(alpha, gamma, T, eps, sups, np.array(targ), bound, fit)


# -- auxiliary freezing scheme ----------------------------------------------------


@dataclass
class AuxiliarySweep:
    epsilon: float
    deltas: np.ndarray
    y_err_sup: np.ndarray
    x_err_sup: np.ndarray
    n_mc: int
    n_failed: int
    y_fit: Optional[RateEstimate]
    x_fit: Optional[RateEstimate]

    def csv_lines(self) -> list[str]:
        lines = ["delta,y_err_sup,x_err_sup"]
        for d, ye, xe in zip(self.deltas, self.y_err_sup, self.x_err_sup):
            lines.append(f"{d:.17g},{ye:.17g},{xe:.17g}")
        return lines


def auxiliary_error_sweep(model: ModelSpec, T: float, h: float, epsilon: float,
                          delta_list: Sequence[float], n_mc: int, seed: int, *,
                          chunk: int = CHUNK, output_points: int = OUTPUT_POINTS) -> AuxiliarySweep:
    """``sup_t E|Y - Yhat|^2`` and ``sup_t E|X - Xhat|^2`` against delta, shared noise."""
    deltas = np.asarray(sorted(delta_list, reverse=True), dtype=float)
    grids = [GridSpec(T, h, d) for d in deltas]
    base = grids[0].with_delta(None)
    w = volterra_weights(model.alpha, base.h, base.N)
    idx = output_indices(base.N, output_points)
    ysum = np.zeros((len(deltas), len(idx)))
    xsum = np.zeros((len(deltas), len(idx)))
    n_ok = 0
    n_failed = 0
    for start in range(0, n_mc, chunk):
        ids = range(start, min(start + chunk, n_mc))
        dw = batch_increments(seed, ids, model.m, base.N, base.h)
        X, Y, bad = coupled_batch(model, base, epsilon, dw, weights=w)
        aux = [auxiliary_batch(model, g, epsilon, dw, X, weights=w) for g in grids]
        for _, _, bad_h in aux:
            bad = bad | bad_h
        ok = ~bad
        n_ok += int(ok.sum())
        n_failed += int(bad.sum())
        for i, (Xh, Yh, _) in enumerate(aux):
            dy = (Y[idx] - Yh[idx])[:, ok]
            dx = (X[idx] - Xh[idx])[:, ok]
            ysum[i] += np.sum(np.sum(dy * dy, axis=-1), axis=1)
            xsum[i] += np.sum(np.sum(dx * dx, axis=-1), axis=1)
    y_sup = (ysum / n_ok).max(axis=1)
    x_sup = (xsum / n_ok).max(axis=1)
    y_fit = x_fit = None
    if len(deltas) >= 2:
        y_fit = _maybe_fit(deltas, y_sup)
        x_fit = _maybe_fit(deltas, x_sup)
    return AuxiliarySweep(epsilon, deltas, y_sup, x_sup, n_mc, n_failed, y_fit, x_fit)


def _maybe_fit(x, y):
    try:
        return fit_power_law(x, y, min_points=2)
    except ValueError:
        return None


def holder_ratios(model: ModelSpec, T: float, h: float, epsilon: float, beta: float, n_mc: int,
                  seed: int, *, max_lag_fraction: float = 0.1, n_lags: int = 25,
                  n_starts: int = 100) -> float:
    """``max (E|X(t2) - X(t1)|^2)^(1/2) / |t2 - t1|^beta`` over grid pairs.

    Lags range log-uniformly over ``[h, max_lag_fraction * T]``; start times are
    ``n_starts`` evenly spaced grid points.
    """
    grid = GridSpec(T, h)
    w = volterra_weights(model.alpha, grid.h, grid.N)
    dw = batch_increments(seed, range(n_mc), model.m, grid.N, grid.h)
    X, _, bad = coupled_batch(model, grid, epsilon, dw, weights=w)
    X = X[:, ~bad]
    max_lag = max(1, int(max_lag_fraction * grid.N))
    lags = np.unique(np.geomspace(1, max_lag, n_lags).astype(int))
    best = 0.0
    for lag in lags:
        starts = np.unique(np.linspace(0, grid.N - lag, n_starts).astype(int))
        d = X[starts + lag] - X[starts]
        rms = np.sqrt(np.mean(np.sum(d * d, axis=-1), axis=1))
        best = max(best, float(rms.max() / (lag * grid.h) ** beta))
    return best
