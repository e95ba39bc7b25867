"""Pure-Python reference kernels.

Mirrors ``_kernels.pyx`` function for function; selected at import when the
compiled extension is unavailable or ``SINGVI_PURE_PYTHON`` is set.
"""

import math

import numpy as np

_EPS = 1e-17
_TINY = 1e-300
_MAX_ITER = 100000


def _series(a, x):
    # S(a, x) = sum_k x^k / ((a+1)...(a+k)); gamma(a, x) = x^a e^-x S / Gamma(a+1)
    term = 1.0
    total = 1.0
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if term < total * _EPS:
            return total
    raise ArithmeticError("incomplete gamma series did not converge")


def _log_upper_cf(a, x):
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return a * math.log(x) - x - math.lgamma(a) + math.log(h)
    raise ArithmeticError("incomplete gamma continued fraction did not converge")


def log_reg_lower_gamma(a, x):
    if x <= 0.0:
        return -math.inf
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return a * math.log(x) - x - math.lgamma(a + 1.0) + math.log(_series(a, x))
    log_q = _log_upper_cf(a, x)
    return math.log1p(-math.exp(log_q))


def reg_lower_gamma(a, x):
    return math.exp(log_reg_lower_gamma(a, x))


def moment_G(lam, beta):
    if beta <= 0.0:
        return lam / (lam + 1.0)
    if beta < lam + 1.0:
        return lam / (lam + 1.0) * _series(lam + 1.0, beta) / _series(lam, beta)
    log_r = (lam * math.log(beta) - beta - math.lgamma(lam + 1.0)
             - log_reg_lower_gamma(lam, beta))
    return -lam / beta * math.expm1(log_r)


def log_norm_B(k, h, beta):
    lam = (h + 1.0) / (2.0 * k)
    if beta <= 0.0:
        return -math.log(h + 1.0)
    if beta < lam + 1.0:
        return -math.log(h + 1.0) - beta + math.log(_series(lam, beta))
    return (-lam * math.log(beta) + math.lgamma(lam) + log_reg_lower_gamma(lam, beta)
            - math.log(2.0 * k))


def arm_kl(lam, beta):
    """KL of f_{k,h,beta} from the monomial prior; a function of lambda only."""
    if beta <= 0.0:
        return 0.0
    g = moment_G(lam, beta)
    if beta < lam + 1.0:
        return -beta * g + beta - math.log(_series(lam, beta))
    return -beta * g + lam * math.log(beta) - math.lgamma(lam + 1.0) - log_reg_lower_gamma(lam, beta)


def cavi_orbit(lam1, lam2, n, mu2_0, tol, max_iter):
    """Run the sequential two-coordinate update from ``mu2_0``.

    Returns ``(mu1, mu2, converged)`` where the arrays hold iterates
    t = 1..T and convergence is a relative step on mu2 below ``tol``.
    """
    mu1s = np.empty(max_iter)
    mu2s = np.empty(max_iter)
    mu2 = mu2_0
    converged = False
    t = 0
    while t < max_iter:
        mu1 = moment_G(lam2, n * mu2)
        new2 = moment_G(lam1, n * mu1)
        mu1s[t] = mu1
        mu2s[t] = new2
        t += 1
        if abs(new2 - mu2) <= tol * max(abs(new2), _TINY):
            converged = True
            break
        mu2 = new2
    return mu1s[:t].copy(), mu2s[:t].copy(), converged


def moment_G_vec(lam, beta):
    beta = np.asarray(beta, dtype=float)
    out = np.empty(beta.shape)
    flat = out.reshape(-1)
    for i, b in enumerate(beta.reshape(-1)):
        flat[i] = moment_G(lam, float(b))
    return out


def log_norm_B_vec(k, h, beta):
    beta = np.asarray(beta, dtype=float)
    out = np.empty(beta.shape)
    flat = out.reshape(-1)
    for i, b in enumerate(beta.reshape(-1)):
        flat[i] = log_norm_B(k, h, float(b))
    return out
