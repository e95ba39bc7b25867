"""Mean-field coordinate ascent for the two-dimensional normal form.

Arm i of the product family is f_{k_i, h_i, n mu_i}.  One sweep updates

    mu1 <- G(lam2, n mu2),   then   mu2 <- G(lam1, n mu1),

so mu2 follows the one-dimensional map x -> G(lam1, n G(lam2, n x)), which is
increasing.  Plain iteration of that map is used for the trace.  When the
thresholds are equal its derivative at the fixed point is 1 - O(e^{-sqrt(n)})
and the iteration stalls long before reaching double precision, so the
returned fixed point is polished by a bracketed root solve that starts from
the last iterate of the orbit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from . import special
from ._backend import kernels
from .errors import ConvergenceError, DomainError, UnsupportedModelError
from .normal_form import (
    MeanFieldState,
    NormalForm,
    coord_lambdas,
    elbo_product,
    lambdas_equal,
)

__all__ = [
    "CaviState",
    "CaviTrace",
    "cavi_step",
    "decoupled_map",
    "solve_fixed_point",
    "elbo_at",
    "solve_constraint",
    "fixed_point_orders",
    "OrderReport",
    "elbo_slope_fit",
    "SlopeFit",
]


def _lams(model: NormalForm):
    if model.d != 2 or min(model.k) < 1:
        raise UnsupportedModelError("CAVI is implemented for d = 2 with k_1, k_2 > 0")
    if not model.unit_b:
        raise UnsupportedModelError("CAVI closed forms need b == 1")
    l1, l2 = coord_lambdas(model)
    return l1, l2


@dataclass(frozen=True)
class CaviState:
    mu1: float
    mu2: float
    n: float
    model: NormalForm

    def __post_init__(self):
        if self.mu1 < 0 or self.mu2 < 0:
            raise DomainError("moments must be nonnegative")
        if not self.n > 0:
            raise DomainError("n must be positive")
        _lams(self.model)

    @property
    def lams(self):
        l1, l2 = _lams(self.model)
        return float(l1), float(l2)

    def in_range(self, slack: float = 0.0) -> bool:
        l1, l2 = self.lams
        return (self.mu1 <= l2 / (l2 + 1) + slack) and (self.mu2 <= l1 / (l1 + 1) + slack)

    def as_mean_field(self) -> MeanFieldState:
        return MeanFieldState.from_betas(self.model, (self.n * self.mu1, self.n * self.mu2))


@dataclass
class CaviTrace:
    t: np.ndarray
    mu1: np.ndarray
    mu2: np.ndarray
    elbo: np.ndarray
    converged: bool
    iterations: int
    fixed_point: tuple
    orbit_converged: bool = False
    polished: bool = False
    residual: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def iterates(self):
        return list(zip(self.t.tolist(), self.mu1.tolist(), self.mu2.tolist(),
                        self.elbo.tolist()))


def cavi_step(state: CaviState) -> CaviState:
    l1, l2 = state.lams
    mu1 = special.moment_G(l2, state.n * state.mu2)
    mu2 = special.moment_G(l1, state.n * mu1)
    return CaviState(mu1, mu2, state.n, state.model)


def decoupled_map(model: NormalForm, n: float, x: float) -> float:
    l1, l2 = (float(v) for v in _lams(model))
    return special.moment_G(l1, n * special.moment_G(l2, n * x))


def elbo_at(state: CaviState) -> float:
    """ELBO of the product of arms with betas (n mu1, n mu2)."""
    (k1, k2), (h1, h2) = state.model.k, state.model.h
    l1, l2 = state.lams
    b1, b2 = state.n * state.mu1, state.n * state.mu2
    g1 = special.moment_G(l1, b1)
    g2 = special.moment_G(l2, b2)
    return (-state.n * g1 * g2 + b1 * g1 + b2 * g2
            + special.log_norm_B(k1, h1, b1) + special.log_norm_B(k2, h2, b2)
            + math.log1p(h1) + math.log1p(h2))


def _elbo_vec(model, n, mu1, mu2):
    (k1, k2), (h1, h2) = model.k, model.h
    l1, l2 = (float(v) for v in _lams(model))
    b1, b2 = n * np.asarray(mu1), n * np.asarray(mu2)
    g1 = kernels.moment_G_vec(l1, b1)
    g2 = kernels.moment_G_vec(l2, b2)
    return (-n * g1 * g2 + b1 * g1 + b2 * g2
            + kernels.log_norm_B_vec(float(k1), float(h1), b1)
            + kernels.log_norm_B_vec(float(k2), float(h2), b2)
            + math.log1p(h1) + math.log1p(h2))


def _symmetric(model):
    l1, l2 = _lams(model)
    return lambdas_equal(l1, l2)


def _polish(model, n, x_last):
    """Root of the fixed-point residual, bracketed from the orbit's last iterate."""
    l1, l2 = (float(v) for v in _lams(model))
    hi = l1 / (l1 + 1.0)
    if _symmetric(model):
        # with equal thresholds the composed map shares its fixed point with
        # x -> G(lam, n x), whose residual has slope <= -1 and is well conditioned
        def resid(x):
            return kernels.moment_G(l1, n * x) - x
    else:
        def resid(x):
            return kernels.moment_G(l1, n * kernels.moment_G(l2, n * x)) - x

    x0 = min(max(x_last, 0.0), hi)
    r0 = resid(x0)
    if r0 == 0.0:
        return x0
    if r0 > 0:
        a, b = x0, hi
    else:
        a, b = 0.0, x0
    if resid(a) < 0 or resid(b) > 0:
        # the orbit ended on the wrong side for the reduced residual; use the full range
        a, b = 0.0, hi
    return optimize.brentq(resid, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                           maxiter=500)


def solve_fixed_point(model: NormalForm, n: float, tol: float = 1e-12,
                      max_iter: int = 10_000, init: Optional[float] = None,
                      polish: bool = True, strict: bool = False):
    """Iterate the decoupled map from ``init`` and return (mu1*, mu2*, trace).

    ``init`` is the starting mu2 (default: half of its admissible range).
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    if not n > 0:
        raise DomainError("n must be positive")
    l1, l2 = (float(v) for v in _lams(model))
    if init is None:
        init = l1 / (2.0 * (l1 + 1.0))
    if init < 0:
        raise DomainError("init must be nonnegative")

    mu1s, mu2s, conv = kernels.cavi_orbit(l1, l2, float(n), float(init), float(tol),
                                          int(max_iter))
    elbos = _elbo_vec(model, n, mu1s, mu2s)
    x_last = float(mu2s[-1])
    if polish:
        x_star = _polish(model, n, x_last)
        mu2_star = x_star
        mu1_star = kernels.moment_G(l2, n * x_star)
        if _symmetric(model):
            mu1_star = x_star  # exact symmetry of the fixed point
        polished = True
    else:
        mu1_star, mu2_star = float(mu1s[-1]), x_last
        polished = False
    res = abs(kernels.moment_G(l1, n * kernels.moment_G(l2, n * mu2_star)) - mu2_star)
    converged = res <= max(tol * mu2_star, 1e-300) * 10 or conv
    if strict and not conv:
        raise ConvergenceError(f"orbit did not converge in {max_iter} iterations",
                               best=(float(mu1s[-1]), x_last))
    trace = CaviTrace(
        t=np.arange(1, len(mu1s) + 1), mu1=mu1s, mu2=mu2s, elbo=elbos,
        converged=bool(converged), iterations=len(mu1s),
        fixed_point=(mu1_star, mu2_star), orbit_converged=bool(conv),
        polished=polished, residual=res,
    )
    state = CaviState(mu1_star, mu2_star, n, model)
    if not state.in_range(slack=1e-15):
        raise ConvergenceError("fixed point left its admissible range",
                               best=(mu1_star, mu2_star))
    if _symmetric(model) and mu2_star > math.sqrt(l1 / n) * (1 + 1e-12):
        raise ConvergenceError("symmetric fixed point exceeds sqrt(lam / n)",
                               best=(mu1_star, mu2_star))
    return mu1_star, mu2_star, trace


def solve_constraint(alpha: float, beta: float, tol: float = 1e-13) -> Optional[float]:
    """Root of z G(alpha, z) = beta, or None when alpha <= beta.

    z G(alpha, z) increases from 0 to alpha, so a root exists exactly when
    beta < alpha.  The bracket is grown by doubling, then bisected.
    """
    if not (alpha > 0 and beta > 0):
        raise DomainError("alpha and beta must be positive")
    if alpha <= beta:
        return None

    def f(z):
        return z * kernels.moment_G(alpha, z) - beta

    lo, hi = 0.0, 1.0
    while f(hi) < 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            return None
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class OrderReport:
    case: str
    n_grid: tuple
    mu1: tuple
    mu2: tuple
    n_mu1_mu2: tuple
    normalized: dict
    spread_top: dict
    limits: dict
    ok: bool

    def to_dict(self):
        return {
            "case": self.case, "n_grid": list(self.n_grid), "mu1": list(self.mu1),
            "mu2": list(self.mu2), "n_mu1_mu2": list(self.n_mu1_mu2),
            "normalized": {k: list(v) for k, v in self.normalized.items()},
            "spread_top": self.spread_top, "limits": self.limits, "ok": self.ok,
        }


def _spread(values):
    v = np.asarray(values, dtype=float)
    return float(v.max() / v.min() - 1.0)


def _grid_check(n_grid, decades):
    ns = np.asarray(sorted(float(v) for v in n_grid))
    if ns.size < 2:
        raise DomainError("grid needs at least two points")
    if math.log10(ns[-1] / ns[0]) < decades - 1e-9:
        raise DomainError(f"grid must span at least {decades} decades")
    return ns


def fixed_point_orders(model: NormalForm, n_grid: Sequence[float],
                       band: float = 0.25) -> OrderReport:
    """Scaling of the fixed point in n, normalized per case."""
    ns = _grid_check(n_grid, 3)
    l1, l2 = (float(v) for v in _lams(model))
    pts = [solve_fixed_point(model, n)[:2] for n in ns]
    mu1 = np.array([p[0] for p in pts])
    mu2 = np.array([p[1] for p in pts])
    prod = ns * mu1 * mu2
    top = ns >= ns[-1] / 100.0 * (1 - 1e-12)
    limits = {}
    if _symmetric(model):
        case = "symmetric"
        norm = {"sqrt_n_mu": np.sqrt(ns) * mu1}
        limits["sqrt_lambda"] = math.sqrt(l1)
    elif l1 < l2:
        case = "lam1<lam2"
        norm = {"n_mu2": ns * mu2, "mu1": mu1}
        c2 = solve_constraint(l2, l1)
        limits.update(c2=c2, c1=l1 / c2)
    else:
        case = "lam1>lam2"
        norm = {"n_mu1": ns * mu1, "mu2": mu2}
        c1 = solve_constraint(l1, l2)
        limits.update(c1=c1, c2=l2 / c1)
    spread = {k: _spread(v[top]) for k, v in norm.items()}
    spread["n_mu1_mu2"] = _spread(prod[top])
    ok = all(s < band for s in spread.values())
    return OrderReport(case, tuple(ns), tuple(mu1), tuple(mu2), tuple(prod),
                       {k: tuple(v) for k, v in norm.items()}, spread, limits, ok)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r2: float
    n_grid: tuple
    elbo: tuple

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2,
                "grid": list(self.n_grid), "elbo": list(self.elbo)}


def linear_fit(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    ss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / ss if ss > 0 else 1.0
    return float(coef[1]), float(coef[0]), r2


def elbo_slope_fit(model: NormalForm, n_grid: Sequence[float]) -> SlopeFit:
    """Regress the ELBO at the CAVI fixed point on log n."""
    ns = np.asarray(sorted(float(v) for v in n_grid))
    if ns.size < 2 or ns[0] == ns[-1]:
        raise DomainError("slope fit needs at least two distinct grid points")
    elbos = []
    for n in ns:
        mu1, mu2, _ = solve_fixed_point(model, n)
        elbos.append(elbo_at(CaviState(mu1, mu2, n, model)))
    slope, icpt, r2 = linear_fit(np.log(ns), elbos)
    return SlopeFit(slope, icpt, r2, tuple(ns), tuple(elbos))


def elbo_at_product(state: CaviState) -> float:
    """Same functional through the general product-form code path."""
    return elbo_product(state.model, state.as_mean_field(), state.n)
