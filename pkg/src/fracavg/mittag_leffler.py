"""Real-argument Mittag-Leffler functions by power series.

``E_{a,b}(z) = sum_k z**k / Gamma(a*k + b)`` is summed term by term until the
current term and a geometric bound on the remaining tail fall below ``tol``.
Only moderate arguments are supported (``|z| <= z_max``). When the alternating
series for negative ``z`` cancels too many digits for double precision the
same series is re-summed in extended precision with mpmath.
"""
from __future__ import annotations

import math

import mpmath

__all__ = [
    "SeriesError",
    "Z_MAX",
    "K_MAX",
    "gamma",
    "ml",
    "linear_averaged_solution",
]

Z_MAX = 50.0
K_MAX = 10_000
MAX_DIGITS = 2_000

_EPS = 2.0 ** -52


class SeriesError(ValueError):
    """Raised when the series cannot deliver the requested accuracy."""


class _TermOverflow(ArithmeticError):
    pass


def gamma(x: float) -> float:
    """Gamma function; exact at positive integers (shared by the solvers)."""
    return math.gamma(x)


def _term(alpha: float, beta: float, z: float, k: int) -> float:
    arg = alpha * k + beta
    if z == 0.0:
        return 0.0 if k else 1.0 / math.gamma(arg)
    logz = k * math.log(abs(z))
    if arg < 170.0 and logz < 700.0:
        return z**k / math.gamma(arg)
    logmag = logz - math.lgamma(arg)
    if logmag < -745.0:
        return 0.0
    if logmag > 709.0:
        raise _TermOverflow(k)
    sign = -1.0 if (z < 0 and k % 2) else 1.0
    return sign * math.exp(logmag)


def _tail_bound(alpha: float, beta: float, z: float, k: int, term: float) -> float:
    # successive-term ratio |z| * Gamma(a k + b) / Gamma(a (k+1) + b), bounded by the next one
    ratio = abs(z) * math.exp(math.lgamma(alpha * k + beta) - math.lgamma(alpha * (k + 1) + beta))
    if ratio >= 1.0:
        return math.inf
    return abs(term) * ratio / (1.0 - ratio)


def _series_double(alpha, beta, z, tol):
    total = 0.0
    comp = 0.0
    biggest = 0.0
    for k in range(K_MAX):
        term = _term(alpha, beta, z, k)
        biggest = max(biggest, abs(term))
        # Kahan-Babuska (Neumaier) summation
        t = total + term
        if abs(total) >= abs(term):
            comp += (total - t) + term
        else:
            comp += (term - t) + total
        total = t
        if k > 0 and abs(term) < tol and _tail_bound(alpha, beta, z, k, term) < tol:
            return total + comp, biggest
    raise SeriesError(f"tolerance {tol:g} not reached within {K_MAX} terms")


def _log_biggest_term(alpha, beta, z):
    k = range(K_MAX)
    return max(n * math.log(abs(z)) - math.lgamma(alpha * n + beta) for n in k)


def _series_mp(alpha, beta, z, tol, digits):
    with mpmath.workdps(digits):
        a = mpmath.mpf(alpha)
        b = mpmath.mpf(beta)
        zz = mpmath.mpf(z)
        total = mpmath.mpf(0)
        for k in range(K_MAX):
            term = zz**k / mpmath.gamma(a * k + b)
            total += term
            if k > 0 and abs(term) < tol:
                nxt = abs(zz) * mpmath.gamma(a * k + b) / mpmath.gamma(a * (k + 1) + b)
                if nxt < 1 and abs(term) * nxt / (1 - nxt) < tol:
                    return float(total)
    raise SeriesError(f"tolerance {tol:g} not reached within {K_MAX} terms")


def ml(alpha: float, beta: float = 1.0, z: float = 0.0, tol: float = 1e-14,
       z_max: float = Z_MAX) -> float:
    """Two-parameter Mittag-Leffler function ``E_{alpha,beta}(z)`` for real ``z``.

    Raises :class:`SeriesError` when ``|z| > z_max`` or when ``tol`` is not
    reached within ``K_MAX`` terms.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if beta <= 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if not math.isfinite(z) or abs(z) > z_max:
        raise SeriesError(f"|z| = {abs(z):g} is outside series validity (z_max = {z_max:g})")
    if z == 0.0:
        return 1.0 / gamma(beta)

    try:
        value, biggest = _series_double(alpha, beta, z, tol)
        log_biggest = math.log(biggest)
    except _TermOverflow:
        value, log_biggest = None, _log_biggest_term(alpha, beta, z)
    # rounding error of the double sum scales with the largest term
    if value is None or log_biggest + math.log(64 * _EPS) > math.log(tol):
        digits = 20 + int(math.ceil((log_biggest - math.log(tol)) / math.log(10.0)))
        if digits > MAX_DIGITS:
            raise SeriesError(f"cancellation needs {digits} digits (limit {MAX_DIGITS})")
        value = _series_mp(alpha, beta, z, tol, digits)

    if beta == 1.0 and z <= 0.0 and not (-1.0 <= value <= 1.0 + tol):
        raise SeriesError(
            f"E_{alpha}({z}) = {value!r} violates the complete-monotonicity range [-1, 1]"
        )
    return value


def linear_averaged_solution(a: float, c: float, alpha: float, x0: float, t: float,
                             tol: float = 1e-14) -> float:
    """Closed-form solution at time ``t`` of ``X = x0 + I^alpha[a X + c]`` (scalar)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return float(x0)
    ta = t**alpha
    z = a * ta
    return x0 * ml(alpha, 1.0, z, tol) + c * ta * ml(alpha, alpha + 1.0, z, tol)
