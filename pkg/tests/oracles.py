"""Independent reference computations used by the tests."""
import math

import mpmath
import numpy as np
from scipy.integrate import quad
from scipy.linalg import solve_triangular


def ml_mp(alpha, beta, z, dps=40):
    """Mittag-Leffler series in high precision."""
    with mpmath.workdps(dps):
        a, b, z = mpmath.mpf(alpha), mpmath.mpf(beta), mpmath.mpf(z)
        return float(mpmath.nsum(lambda k: z**k / mpmath.gamma(a * k + b), [0, mpmath.inf]))


def kernel_row_sum_mp(alpha, t, dps=40):
    """``t^a / (a Gamma(a))`` in high precision."""
    with mpmath.workdps(dps):
        a = mpmath.mpf(alpha)
        return float(mpmath.mpf(t) ** a / (a * mpmath.gamma(a)))


def brute_integral_I(alpha, gamma, eps, t):
    """Double integral by adaptive quadrature, without the hypergeometric closed form.

    With ``rho = t - s1``, ``theta = t - s2`` and then ``rho = w^(1/a)``,
    ``theta = v^(1/a)`` the kernel singularities disappear::

        I = a^-2 int_0^(t^a) int_0^w exp(-lam (w^(1/a) - v^(1/a))) dv dw
    """
    a = alpha
    lam = gamma / eps

    def inner(w):
        r = w ** (1 / a)
        lo = max(0.0, r - 40.0 / lam) ** a
        g = lambda v: math.exp(-lam * (r - v ** (1 / a)))  # noqa: E731
        val = quad(g, lo, w, epsabs=0, epsrel=1e-12, limit=200)[0]
        return val

    outer = quad(inner, 0.0, t**a, epsabs=0, epsrel=1e-11, limit=400)[0]
    return outer / a**2


def exact_linear_ou_mse(alpha, eps, h, T=1.0, s=1.0):
    """Exact ``E|X_n - Xbar_n|^2`` of the discretised linear OU benchmark.

    With ``f = -x + y`` and ``y0 = mbar`` the error is linear in the discrete
    OU fluctuation ``eta``: ``e = (I + W)^-1 W eta``, where ``W`` is the
    quadrature matrix and ``eta`` is an AR(1) sequence. The covariance of
    ``eta`` is known in closed form, so the mean-square error is
    ``diag(L C L^T)`` with no sampling.
    """
    from fracavg.frac_solver import volterra_weights

    N = round(T / h)
    w = volterra_weights(alpha, h, N).by_lag
    idx = np.arange(N + 1)
    lag = idx[:, None] - idx[None, :]
    W = np.where(lag > 0, w[np.clip(lag, 0, N)], 0.0)
    L = solve_triangular(np.eye(N + 1) + W, W, lower=True)
    a = 1.0 - h / eps
    c2 = 2.0 * s * s * h / eps
    var = np.zeros(N + 1)
    for j in range(N):
        var[j + 1] = a * a * var[j] + c2
    C = var[np.minimum.outer(idx, idx)] * a ** np.abs(lag)
    return np.einsum("ij,ij->i", L @ C, L)
