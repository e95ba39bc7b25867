"""Incomplete gamma, the truncated-monomial normalizer B and the moment G.

The variational arm used throughout the package is the density

    f_{k,h,beta}(u) = u^h exp(-beta u^{2k}) / B(k, h, beta),   u in [0, 1],

whose normalizer and ``2k``-th moment reduce to regularized lower incomplete
gamma functions of ``lam = (h + 1) / (2k)``.  Everything here is evaluated in
log space where it matters so that ``beta`` up to ~1e8 is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import DomainError

__all__ = [
    "LogValue",
    "reg_lower_inc_gamma",
    "log_reg_lower_inc_gamma",
    "gamma_recurrence_check",
    "norm_B",
    "log_norm_B",
    "moment_G",
    "moment_G_array",
    "arm_kl",
    "arm_lambda",
]


@dataclass(frozen=True)
class LogValue:
    """A positive quantity stored by its natural logarithm."""

    log_magnitude: float
    sign: int = 1

    def __post_init__(self):
        if self.sign != 1:
            raise DomainError("only positive quantities are represented")
        if math.isnan(self.log_magnitude):
            raise DomainError("log magnitude is NaN")

    @property
    def value(self) -> float:
        # exp saturates to 0.0 / inf outside the double range
        if self.log_magnitude > 709.78:
            return math.inf
        return math.exp(self.log_magnitude)

    @classmethod
    def from_value(cls, x: float) -> "LogValue":
        if not x > 0:
            raise DomainError(f"LogValue needs a positive value, got {x!r}")
        return cls(math.log(x))

    def __float__(self):
        return self.value


def _check_positive(name, v):
    if not (v > 0) or math.isinf(v):
        raise DomainError(f"{name} must be positive and finite, got {v!r}")


def _check_nonneg(name, v):
    if not (v >= 0):
        raise DomainError(f"{name} must be nonnegative, got {v!r}")


def log_reg_lower_inc_gamma(a: float, x: float) -> float:
    _check_positive("a", a)
    _check_nonneg("x", x)
    return kernels.log_reg_lower_gamma(float(a), float(x))


def reg_lower_inc_gamma(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    return math.exp(log_reg_lower_inc_gamma(a, x))


def gamma_recurrence_check(a: float, x: float) -> float:
    """Residual of P(a+1, x) - P(a, x) + x^a e^{-x} / Gamma(a+1)."""
    _check_positive("a", a)
    _check_positive("x", x)
    term = math.exp(a * math.log(x) - x - math.lgamma(a + 1.0))
    return reg_lower_inc_gamma(a + 1.0, x) - reg_lower_inc_gamma(a, x) + term


def arm_lambda(k: float, h: float) -> float:
    return (h + 1.0) / (2.0 * k)


def log_norm_B(k: float, h: float, beta: float) -> float:
    _check_positive("k", k)
    _check_nonneg("h", h)
    _check_nonneg("beta", beta)
    return kernels.log_norm_B(float(k), float(h), float(beta))


def norm_B(k: float, h: float, beta: float) -> LogValue:
    """B(k, h, beta) = int_0^1 u^h exp(-beta u^{2k}) du, as a LogValue."""
    return LogValue(log_norm_B(k, h, beta))


def moment_G(lam: float, beta: float) -> float:
    """E[u^{2k}] under f_{k,h,beta}; depends on (k, h) only through lam."""
    _check_positive("lambda", lam)
    _check_nonneg("beta", beta)
    return kernels.moment_G(float(lam), float(beta))


def moment_G_array(lam: float, beta) -> np.ndarray:
    _check_positive("lambda", lam)
    beta = np.asarray(beta, dtype=float)
    if np.any(beta < 0):
        raise DomainError("beta must be nonnegative")
    return kernels.moment_G_vec(float(lam), beta)


def arm_kl(lam: float, beta: float) -> float:
    """KL(f_{k,h,beta} || normalized monomial prior (h+1)u^h).

    The divergence is invariant under (k, h) changes that keep lam fixed.
    """
    _check_positive("lambda", lam)
    _check_nonneg("beta", beta)
    return kernels.arm_kl(float(lam), float(beta))
