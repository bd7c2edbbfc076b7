"""Pure-Python array kernels.

Reference implementation of the compiled core: same signatures, same
formulas, built element by element on :mod:`qfreg.special`.
"""

from __future__ import annotations

import math

import numpy as np

from . import special as sf

BACKEND = "python"


def _map(fn, x):
    x = np.asarray(x, dtype=float)
    out = np.fromiter((fn(v) for v in x.ravel()), dtype=float, count=x.size)
    return out.reshape(x.shape)


def norm_cdf(x):
    return _map(sf.std_normal_cdf, x)


def norm_ppf(p):
    return _map(sf.std_normal_quantile, p)


def reg_lower_gamma(a, b):
    a = float(a)
    return _map(lambda v: sf.reg_lower_gamma(a, v), b)


def _residual_t_one(t, n, weight, nu1, nu2, theta):
    if t <= 0.0:
        return 0.0
    m = n - 1.0
    l1 = (math.log(weight) + (m - 1.0) * math.log(t) - t / nu2
          - math.lgamma(m) - m * math.log(nu2))
    total = math.exp(l1)
    if weight < 1.0:
        l2 = (math.log1p(-weight) - t / nu1 - math.log(nu1)
              + (n - 2.0) * math.log(theta / nu2)
              + sf.log_reg_lower_gamma(n - 2.0, t / theta))
        total += math.exp(l2)
    return total


def residual_t_density(t, n, weight, nu1, nu2, theta):
    """Mixture density of the residual scale at each ``t``."""
    n, weight, nu1, nu2, theta = map(float, (n, weight, nu1, nu2, theta))
    return _map(lambda v: _residual_t_one(v, n, weight, nu1, nu2, theta), t)


def _mean_t_one(tau, n, lam, c, K):
    if tau <= 0.0:
        return 0.0
    m = n - 1.0
    base = math.log(lam) - lam * tau
    if c == 0.0:
        # limit P(m, cK tau) / c^m as c -> 0
        return math.exp(base - m * math.log(n / m) + m * math.log(K * tau) - math.lgamma(m + 1.0))
    arg = c * K * tau
    if arg > 0.0:
        sign, logp = 1.0, sf.log_reg_lower_gamma(m, arg)
    else:
        sign, logp = sf.negative_gamma_log(m, arg)
    if c < 0.0 and int(m) % 2:
        sign = -sign
    return sign * math.exp(base - m * math.log(n / m * abs(c)) + logp)


def mean_response_t_density(tau, n, lam, c, K):
    """Scale factor of the mean-response density at ``tau = t - beta2 * sigma_new``.

    ``lam = n S / (beta a)``, ``c = 1 - S/a`` and ``K = n / ((1 - a/(n S)) beta)``
    where ``a`` is the new design scale and ``S`` the mean design scale.
    """
    n, lam, c, K = map(float, (n, lam, c, K))
    return _map(lambda v: _mean_t_one(v, n, lam, c, K), tau)
