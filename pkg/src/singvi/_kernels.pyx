# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: incomplete gamma, G, log B, arm KL and the CAVI orbit."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, exp, log1p, expm1, lgamma, fabs, INFINITY, isinf

cnp.import_array()

cdef double _EPS = 1e-17
cdef double _TINY = 1e-300
cdef int _MAX_ITER = 100000


cdef double _series(double a, double x) except -1.0:
    cdef double term = 1.0, total = 1.0, ap = a
    cdef int i
    for i in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if term < total * _EPS:
            return total
    raise ArithmeticError("incomplete gamma series did not converge")


cdef double _log_upper_cf(double a, double x) except? -1.0:
    cdef double b = x + 1.0 - a
    cdef double c = 1.0 / _TINY
    cdef double d = 1.0 / b
    cdef double h = d
    cdef double an, delta
    cdef int i
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if fabs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if fabs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if fabs(delta - 1.0) < _EPS:
            return a * log(x) - x - lgamma(a) + log(h)
    raise ArithmeticError("incomplete gamma continued fraction did not converge")


cdef double _log_rlg(double a, double x) except? -1.0:
    if x <= 0.0:
        return -INFINITY
    if isinf(x):
        return 0.0
    if x < a + 1.0:
        return a * log(x) - x - lgamma(a + 1.0) + log(_series(a, x))
    return log1p(-exp(_log_upper_cf(a, x)))


cdef double _moment_G(double lam, double beta) except? -1.0:
    cdef double log_r
    if beta <= 0.0:
        return lam / (lam + 1.0)
    if beta < lam + 1.0:
        return lam / (lam + 1.0) * _series(lam + 1.0, beta) / _series(lam, beta)
    log_r = lam * log(beta) - beta - lgamma(lam + 1.0) - _log_rlg(lam, beta)
    return -lam / beta * expm1(log_r)


cdef double _log_norm_B(double k, double h, double beta) except? -1.0:
    cdef double lam = (h + 1.0) / (2.0 * k)
    if beta <= 0.0:
        return -log(h + 1.0)
    if beta < lam + 1.0:
        return -log(h + 1.0) - beta + log(_series(lam, beta))
    return -lam * log(beta) + lgamma(lam) + _log_rlg(lam, beta) - log(2.0 * k)


def log_reg_lower_gamma(double a, double x):
    return _log_rlg(a, x)


def reg_lower_gamma(double a, double x):
    return exp(_log_rlg(a, x))


def moment_G(double lam, double beta):
    return _moment_G(lam, beta)


def log_norm_B(double k, double h, double beta):
    return _log_norm_B(k, h, beta)


def arm_kl(double lam, double beta):
    cdef double g
    if beta <= 0.0:
        return 0.0
    g = _moment_G(lam, beta)
    if beta < lam + 1.0:
        return -beta * g + beta - log(_series(lam, beta))
    return -beta * g + lam * log(beta) - lgamma(lam + 1.0) - _log_rlg(lam, beta)


def cavi_orbit(double lam1, double lam2, double n, double mu2_0, double tol, int max_iter):
    cdef cnp.ndarray[double] mu1s = np.empty(max_iter)
    cdef cnp.ndarray[double] mu2s = np.empty(max_iter)
    cdef double mu2 = mu2_0, mu1, new2
    cdef bint converged = False
    cdef int t = 0
    while t < max_iter:
        mu1 = _moment_G(lam2, n * mu2)
        new2 = _moment_G(lam1, n * mu1)
        mu1s[t] = mu1
        mu2s[t] = new2
        t += 1
        if fabs(new2 - mu2) <= tol * max(fabs(new2), _TINY):
            converged = True
            break
        mu2 = new2
    return mu1s[:t].copy(), mu2s[:t].copy(), bool(converged)


def moment_G_vec(double lam, beta):
    cdef cnp.ndarray arr = np.ascontiguousarray(beta, dtype=np.float64)
    cdef double[::1] src = arr.reshape(-1)
    out = np.empty(arr.shape[0] if arr.ndim == 1 else arr.size, dtype=np.float64)
    cdef double[::1] dst = out
    cdef Py_ssize_t i
    for i in range(src.shape[0]):
        dst[i] = _moment_G(lam, src[i])
    return out.reshape(np.shape(beta))


def log_norm_B_vec(double k, double h, beta):
    cdef cnp.ndarray arr = np.ascontiguousarray(beta, dtype=np.float64)
    cdef double[::1] src = arr.reshape(-1)
    out = np.empty(arr.size, dtype=np.float64)
    cdef double[::1] dst = out
    cdef Py_ssize_t i
    for i in range(src.shape[0]):
        dst[i] = _log_norm_B(k, h, src[i])
    return out.reshape(np.shape(beta))
