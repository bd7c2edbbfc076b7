# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled array kernels.  Mirrors :mod:`qfreg._pycore` formula for formula."""

import numpy as np
cimport numpy as cnp
from libc.math cimport (erfc, exp, log, log1p, sqrt, fabs, lgamma, cos, sin, fmod, copysign,
                        floor, INFINITY, M_PI)

cnp.import_array()

BACKEND = "cython"

cdef double SQRT2 = 1.4142135623730951
cdef double SQRT2PI = 2.5066282746310002
cdef double EPS = 1e-16
cdef double TINY = 1e-300
cdef int MAX_ITER = 10000

cdef double A0 = -3.969683028665376e01, A1 = 2.209460984245205e02, A2 = -2.759285104469687e02
cdef double A3 = 1.383577518672690e02, A4 = -3.066479806614716e01, A5 = 2.506628277459239e00
cdef double B0 = -5.447609879822406e01, B1 = 1.615858368580409e02, B2 = -1.556989798598866e02
cdef double B3 = 6.680131188771972e01, B4 = -1.328068155288572e01
cdef double C0 = -7.784894002430293e-03, C1 = -3.223964580411365e-01, C2 = -2.400758277161838e00
cdef double C3 = -2.549732539343734e00, C4 = 4.374664141464968e00, C5 = 2.938163982698783e00
cdef double D0 = 7.784695709041462e-03, D1 = 3.224671290700398e-01, D2 = 2.445134137142996e00
cdef double D3 = 3.754408661907416e00
cdef double P_LOW = 0.02425


cdef inline double _cdf(double x) nogil:
    return 0.5 * erfc(-x / SQRT2)


cdef double _ppf(double p) nogil:
    cdef double q, r, x, e, u
    if p < P_LOW:
        q = sqrt(-2.0 * log(p))
        x = (((((C0 * q + C1) * q + C2) * q + C3) * q + C4) * q + C5) / \
            ((((D0 * q + D1) * q + D2) * q + D3) * q + 1.0)
    elif p > 1.0 - P_LOW:
        q = sqrt(-2.0 * log1p(-p))
        x = -(((((C0 * q + C1) * q + C2) * q + C3) * q + C4) * q + C5) / \
            ((((D0 * q + D1) * q + D2) * q + D3) * q + 1.0)
    else:
        q = p - 0.5
        r = q * q
        x = (((((A0 * r + A1) * r + A2) * r + A3) * r + A4) * r + A5) * q / \
            (((((B0 * r + B1) * r + B2) * r + B3) * r + B4) * r + 1.0)
    if p <= 0.5:
        e = 0.5 * erfc(-x / SQRT2) - p
    else:
        e = (1.0 - p) - 0.5 * erfc(x / SQRT2)
    u = e * SQRT2PI * exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


cdef double _cos_pi(double a) nogil:
    # exact argument reduction so half-integers give exactly 0
    cdef double r = fmod(fabs(a), 2.0)
    if r > 1.0:
        r = 2.0 - r
    if r <= 0.25:
        return cos(M_PI * r)
    if r <= 0.75:
        return sin(M_PI * (0.5 - r))
    return -cos(M_PI * (1.0 - r))


cdef inline double _log_prefactor(double a, double b) nogil:
    return a * log(b) - b - lgamma(a)


cdef double _series_sum(double a, double b) nogil:
    cdef double ap = a, term = 1.0 / a, total = term
    cdef int i
    for i in range(MAX_ITER):
        ap += 1.0
        term *= b / ap
        total += term
        if fabs(term) < fabs(total) * EPS:
            break
    return total


cdef double _upper_cf(double a, double b) nogil:
    cdef double bb = b + 1.0 - a, c = 1.0 / TINY, d = 1.0 / bb, h = d, an, delta
    cdef int i
    for i in range(1, MAX_ITER):
        an = -i * (i - a)
        bb += 2.0
        d = an * d + bb
        if fabs(d) < TINY:
            d = TINY
        c = bb + an / c
        if fabs(c) < TINY:
            c = TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if fabs(delta - 1.0) < EPS:
            break
    return exp(_log_prefactor(a, b)) * h


cdef double _log_lower(double a, double b) nogil:
    if b <= 0.0:
        return -INFINITY
    if b < a + 1.0:
        return _log_prefactor(a, b) + log(_series_sum(a, b))
    return log1p(-_upper_cf(a, b))


cdef double _neg_log(double a, double x, double *sign) nogil:
    """log|P(a, -x)| for x > 0; writes the sign of the real value."""
    cdef double c, logsign = 0.0, logx = log(x), lt = 0.0, term, lmax, s, comp, y, tsum, t
    cdef int k, m
    if a == floor(a):
        m = <int>a
        sign[0] = -1.0 if m % 2 else 1.0
        if x > 2.0 * a and x > 30.0:
            # finite closed form; Neumaier-compensated alternating sum
            t = 1.0
            s = 1.0
            comp = 0.0
            for k in range(1, m):
                t *= -x / k
                tsum = s + t
                if fabs(s) >= fabs(t):
                    comp += (s - tsum) + t
                else:
                    comp += (t - tsum) + s
                s = tsum
            s += comp
            sign[0] = -copysign(1.0, s)
            return x + log(fabs(s))
    else:
        c = _cos_pi(a)
        if c == 0.0:
            sign[0] = 0.0
            return -INFINITY
        sign[0] = copysign(1.0, c)
        logsign = log(fabs(c))
    # two passes: find the peak term, then sum rescaled terms
    lmax = -INFINITY
    k = 0
    while True:
        term = lt - log(a + k)
        if term > lmax:
            lmax = term
        if (k > x and term < lmax - 40.0) or k > MAX_ITER * 100:
            break
        k += 1
        lt += logx - log(<double>k)
    s = 0.0
    comp = 0.0
    lt = 0.0
    m = k
    for k in range(m + 1):
        if k:
            lt += logx - log(<double>k)
        t = exp(lt - log(a + k) - lmax)
        y = t - comp
        tsum = s + y
        comp = (tsum - s) - y
        s = tsum
    return logsign + a * logx - lgamma(a) + lmax + log(s)


cdef double _lower(double a, double b) nogil:
    cdef double sign
    cdef double l
    if b == 0.0:
        return 0.0
    if b < 0.0:
        l = _neg_log(a, -b, &sign)
        return sign * exp(l)
    if b < a + 1.0:
        return _series_sum(a, b) * exp(_log_prefactor(a, b))
    return 1.0 - _upper_cf(a, b)


def norm_cdf(x):
    cdef cnp.ndarray[double, ndim=1] xv = np.ascontiguousarray(x, dtype=float).ravel()
    cdef cnp.ndarray[double, ndim=1] out = np.empty_like(xv)
    cdef Py_ssize_t i
    with nogil:
        for i in range(xv.shape[0]):
            out[i] = _cdf(xv[i])
    return out.reshape(np.shape(x))


def norm_ppf(p):
    cdef cnp.ndarray[double, ndim=1] pv = np.ascontiguousarray(p, dtype=float).ravel()
    cdef cnp.ndarray[double, ndim=1] out = np.empty_like(pv)
    cdef Py_ssize_t i
    if pv.shape[0] and not ((pv > 0.0).all() and (pv < 1.0).all()):
        from .errors import DomainError
        raise DomainError("probabilities must lie in (0, 1)")
    with nogil:
        for i in range(pv.shape[0]):
            out[i] = _ppf(pv[i])
    return out.reshape(np.shape(p))


def reg_lower_gamma(double a, b):
    cdef cnp.ndarray[double, ndim=1] bv = np.ascontiguousarray(b, dtype=float).ravel()
    cdef cnp.ndarray[double, ndim=1] out = np.empty_like(bv)
    cdef Py_ssize_t i
    if not a > 0.0:
        from .errors import DomainError
        raise DomainError("shape a must be positive")
    with nogil:
        for i in range(bv.shape[0]):
            out[i] = _lower(a, bv[i])
    return out.reshape(np.shape(b))


def residual_t_density(t, double n, double weight, double nu1, double nu2, double theta):
    cdef cnp.ndarray[double, ndim=1] tv = np.ascontiguousarray(t, dtype=float).ravel()
    cdef cnp.ndarray[double, ndim=1] out = np.empty_like(tv)
    cdef Py_ssize_t i
    cdef double m = n - 1.0, x, l1, l2, c1, c2
    c1 = log(weight) - lgamma(m) - m * log(nu2)
    c2 = log1p(-weight) - log(nu1) + (n - 2.0) * log(theta / nu2) if weight < 1.0 else 0.0
    with nogil:
        for i in range(tv.shape[0]):
            x = tv[i]
            if x <= 0.0:
                out[i] = 0.0
                continue
            l1 = c1 + (m - 1.0) * log(x) - x / nu2
            out[i] = exp(l1)
            if weight < 1.0:
                l2 = c2 - x / nu1 + _log_lower(n - 2.0, x / theta)
                out[i] += exp(l2)
    return out.reshape(np.shape(t))


def mean_response_t_density(tau, double n, double lam, double c, double K):
    cdef cnp.ndarray[double, ndim=1] tv = np.ascontiguousarray(tau, dtype=float).ravel()
    cdef cnp.ndarray[double, ndim=1] out = np.empty_like(tv)
    cdef Py_ssize_t i
    cdef double m = n - 1.0, x, base, arg, logp, sign, flip
    cdef int mi = <int>m
    flip = -1.0 if (c < 0.0 and mi % 2) else 1.0
    with nogil:
        for i in range(tv.shape[0]):
            x = tv[i]
            if x <= 0.0:
                out[i] = 0.0
                continue
            base = log(lam) - lam * x
            if c == 0.0:
                out[i] = exp(base - m * log(n / m) + m * log(K * x) - lgamma(m + 1.0))
                continue
            arg = c * K * x
            if arg > 0.0:
                sign = 1.0
                logp = _log_lower(m, arg)
            else:
                logp = _neg_log(m, -arg, &sign)
            out[i] = flip * sign * exp(base - m * log(n / m * fabs(c)) + logp)
    return out.reshape(np.shape(tau))
