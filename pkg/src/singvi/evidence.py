"""Deterministic evidence Z_K(n) = E[b(xi) exp(-n K(xi))], xi ~ normalized prior.

Three independent routes are provided:

* ``evidence_exact_rep``: one-dimensional integral over the law of
  Z = -log K(xi), which is Gamma (equal thresholds) or a sum of distinct
  exponentials;
* ``evidence_quadrature``: nested adaptive quadrature of the defining integral
  (the last monomial axis is done analytically when b == 1);
* ``evidence_mc``: plain Monte Carlo over prior draws.

The module also holds the order-of-growth regression, the Gamma-surrogate
bounds, the conditional sampler of xi given K(xi), and the Monte Carlo check of
the stochastic decomposition of the random evidence.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence, Union

import mpmath
import numpy as np
from scipy import integrate, special as sps

from . import special
from .errors import ConditioningError, DomainError, UnsupportedModelError
from .normal_form import NormalForm, compute_rlct, coord_lambdas, lambdas_equal

__all__ = [
    "EvidenceEstimate",
    "evidence_quadrature",
    "evidence_exact_rep",
    "evidence_mc",
    "log_gamma_surrogate",
    "BoundsFit",
    "check_theorem21_bounds",
    "SandwichReport",
    "stochastic_order_bounds",
    "ConditionalXiSample",
    "sample_conditional_xi",
    "evidence_mc_conditional",
    "Theorem23Report",
    "theorem23_check",
]

MC_CHUNK = 1 << 16
_Z95 = 1.959963984540054


@dataclass(frozen=True)
class EvidenceEstimate:
    log_value: float
    method: str
    error: float
    n: float
    converged: bool = True
    info: dict = field(default_factory=dict, compare=False)

    @property
    def value(self) -> float:
        return math.exp(self.log_value)

    def agrees_with(self, other: "EvidenceEstimate", factor: float = 1.0) -> bool:
        return abs(self.log_value - other.log_value) <= factor * (self.error + other.error)


def _check_n(n):
    if not (n >= 0) or math.isinf(n):
        raise DomainError(f"n must be finite and nonnegative, got {n!r}")


# ---------------------------------------------------------------------------
# nested quadrature
# ---------------------------------------------------------------------------

def _breakpoints(beta, k):
    """Points near the scale where exp(-beta u^{2k}) turns over."""
    if k == 0 or beta <= 0:
        return None
    s = beta ** (-1.0 / (2.0 * k))
    pts = [s * 2.0 ** i for i in range(-3, 9)]
    pts = [p for p in pts if 1e-300 < p < 1.0]
    return pts or None


class _QuadLog:
    """Collects error bookkeeping from nested quad calls."""

    def __init__(self):
        self.max_inner_rel = 0.0
        self.warned = False

    def quad(self, f, a, b, points, tol):
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, err = integrate.quad(f, a, b, points=points, epsabs=0.0,
                                          epsrel=max(tol, 1e-13), limit=400)
            except integrate.IntegrationWarning:
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                val, err = integrate.quad(f, a, b, points=points, epsabs=0.0,
                                          epsrel=max(tol, 1e-13), limit=400)
                self.warned = True
        return val, err


def evidence_quadrature(model: NormalForm, n: float, tol: float = 1e-10) -> EvidenceEstimate:
    """Nested adaptive Gauss-Kronrod quadrature; supports a general prior factor b."""
    _check_n(n)
    if not tol > 0:
        raise DomainError("tol must be positive")
    if model.d > 3:
        raise UnsupportedModelError("quadrature is limited to d <= 3")
    log = _QuadLog()

    if model.unit_b:
        coords = [(k, h) for k, h in zip(model.k, model.h) if k > 0]
        *outer, (k_last, h_last) = coords

        def last(beta):
            return (h_last + 1.0) * math.exp(special.log_norm_B(k_last, h_last, beta))

        def nest(level, beta):
            if level == len(outer):
                return last(beta)
            k, h = outer[level]

            def f(u):
                return (h + 1.0) * u ** h * nest(level + 1, beta * u ** (2 * k))

            val, err = log.quad(f, 0.0, 1.0, _breakpoints(beta, k), tol)
            if level > 0 and val > 0:
                log.max_inner_rel = max(log.max_inner_rel, err / val)
            nest.last_err = err
            return val

        nest.last_err = 0.0
        if not outer:
            lv = math.log(h_last + 1.0) + special.log_norm_B(k_last, h_last, n)
            return EvidenceEstimate(lv, "quadrature", 1e-14, n)
        val = nest(0, float(n))
        outer_err = nest.last_err
    else:
        b = model.b
        ks, hs = model.k, model.h
        d = model.d

        def nest_b(level, beta, prefix):
            k, h = ks[level], hs[level]

            def f(u):
                xi = prefix + (u,)
                w = (h + 1.0) * (u ** h if h else 1.0)
                if level == d - 1:
                    return w * float(b(np.array(xi))) * math.exp(-beta * u ** (2 * k))
                return w * nest_b(level + 1, beta * u ** (2 * k), xi)

            val, err = log.quad(f, 0.0, 1.0, _breakpoints(beta, k), tol)
            if level > 0 and val > 0:
                log.max_inner_rel = max(log.max_inner_rel, err / val)
            nest_b.last_err = err
            return val

        val = nest_b(0, float(n), ())
        outer_err = nest_b.last_err

    if not val > 0:
        return EvidenceEstimate(-math.inf, "quadrature", math.inf, n, converged=False)
    err = outer_err / val + log.max_inner_rel
    converged = (not log.warned) and err <= max(tol, 1e-14) * 50
    return EvidenceEstimate(math.log(val), "quadrature", err, n, converged,
                            {"inner_rel": log.max_inner_rel})


# ---------------------------------------------------------------------------
# one-dimensional representation over Z = -log T
# ---------------------------------------------------------------------------

def _integrate_z(log_g, n, lam_marks, modifier=None, tol=1e-12):
    """int_0^inf exp(-n e^{-z}) g(z) m(n e^{-z}) dz, split at t = n e^{-z} = 1."""
    if n == 0:
        raise ValueError("handled by caller")
    mod = modifier or (lambda t: 1.0)

    def zform(z):
        t = n * math.exp(-z)
        lg = log_g(z)
        return 0.0 if lg == -math.inf else math.exp(lg - t) * mod(t)

    def tform(t):
        lg = log_g(math.log(n / t))
        return 0.0 if lg == -math.inf else math.exp(lg - t - math.log(t)) * mod(t)

    total, err = 0.0, 0.0
    logn = math.log(n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        z0 = max(logn, 0.0)
        v, e = integrate.quad(zform, z0, math.inf, epsabs=0.0, epsrel=max(tol, 1e-13), limit=400)
        total += v
        err += e
        if logn > 0:
            marks = sorted({1.0, 4.0, 16.0, 64.0, 256.0, *lam_marks})
            pts = [p for p in marks if 1.0 < p < n]
            v, e = integrate.quad(tform, 1.0, n, points=pts or None, epsabs=0.0,
                                  epsrel=max(tol, 1e-13), limit=400)
            total += v
            err += e
    return total, err


def _gamma_log_density(m, rate):
    c = m * math.log(rate) - math.lgamma(m)

    def log_g(z):
        if z <= 0:
            return -math.inf if m > 1 else c
        return c + (m - 1) * math.log(z) - rate * z
    return log_g


def _expsum_log_density(lams):
    lams = sorted(float(v) for v in lams)
    gap = min(b - a for a, b in zip(lams, lams[1:]))
    if gap < 1e-3:
        raise ConditioningError(
            f"thresholds too close for the exponential-sum density (gap {gap:.3g})")
    lo = lams[0]
    if gap < 1e-2:
        mp_l = [mpmath.mpf(v) for v in lams]

        def log_g(z):
            with mpmath.workdps(50):
                s = mpmath.mpf(0)
                for i, li in enumerate(mp_l):
                    bk = mpmath.mpf(1)
                    for r, lr in enumerate(mp_l):
                        if r != i:
                            bk *= lr / (lr - li)
                    s += bk * li * mpmath.exp(-li * z)
                return float(mpmath.log(s)) if s > 0 else -math.inf
        return log_g, gap

    coef = []
    for i, li in enumerate(lams):
        bk = 1.0
        for r, lr in enumerate(lams):
            if r != i:
                bk *= lr / (lr - li)
        coef.append(bk * li)

    def log_g(z):
        s = sum(c * math.exp(-(li - lo) * z) for c, li in zip(coef, lams))
        return math.log(s) - lo * z if s > 0 else -math.inf
    return log_g, gap


def _z_density(model: NormalForm):
    """log density of Z = -log K(xi) and the distinct thresholds."""
    lams = [v for v in coord_lambdas(model) if v is not None]
    first = lams[0]
    if all(lambdas_equal(first, v) for v in lams):
        return _gamma_log_density(len(lams), float(first)), [float(first)]
    for i in range(len(lams)):
        for j in range(i + 1, len(lams)):
            if lambdas_equal(lams[i], lams[j]):
                raise UnsupportedModelError(
                    "repeated but not all-equal thresholds; use quadrature or Monte Carlo")
    log_g, _ = _expsum_log_density(lams)
    return log_g, [float(v) for v in lams]


def evidence_exact_rep(model: NormalForm, n: float, tol: float = 1e-12) -> EvidenceEstimate:
    """Evidence via the law of Z = -log K(xi) (Gamma or exponential-sum case)."""
    _check_n(n)
    if not model.unit_b:
        raise UnsupportedModelError("exact representation needs b == 1")
    log_g, marks = _z_density(model)
    if n == 0:
        return EvidenceEstimate(0.0, "exact_rep", 0.0, n)
    val, err = _integrate_z(log_g, float(n), marks, tol=tol)
    return EvidenceEstimate(math.log(val), "exact_rep", err / val + 1e-14, n)


def log_gamma_surrogate(m: float, rate: float, n: float, tol: float = 1e-12) -> float:
    """log E exp(-n e^{-Z}) for Z ~ Gamma(shape m, rate)."""
    if m <= 0:
        return 0.0
    val, _ = _integrate_z(_gamma_log_density(m, rate), float(n), [rate], tol=tol)
    return math.log(val)


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

def _chunk_rng(seed, stream, chunk):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, chunk)))


def _chunks(samples):
    sizes = [MC_CHUNK] * (samples // MC_CHUNK)
    if samples % MC_CHUNK:
        sizes.append(samples % MC_CHUNK)
    return sizes


def _run_chunks(job, sizes, workers):
    idx = list(range(len(sizes)))
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(job, idx, sizes))
    return [job(i, s) for i, s in zip(idx, sizes)]


def _mean_se(parts, samples):
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    mean = s1 / samples
    var = max(s2 / samples - mean * mean, 0.0) * samples / max(samples - 1, 1)
    return mean, math.sqrt(var / samples)


def _prior_draws(rng, model, size):
    u = rng.random((size, model.d))
    # U^{1/(h+1)} is Beta(h+1, 1); keep U in (0, 1] to avoid log(0)
    u = 1.0 - u
    expo = 1.0 / (np.asarray(model.h) + 1.0)
    return u ** expo


def evidence_mc(model: NormalForm, n: float, samples: int = 1_000_000, seed: int = 0,
                workers: int = 1) -> EvidenceEstimate:
    """Plain Monte Carlo; bitwise reproducible for a given seed and any worker count."""
    _check_n(n)
    if samples < 1000:
        raise DomainError("use at least 1000 samples")
    k2 = 2.0 * np.asarray(model.k, dtype=float)

    def job(i, size):
        rng = _chunk_rng(seed, 0, i)
        xi = _prior_draws(rng, model, size)
        with np.errstate(divide="ignore"):
            log_t = np.log(xi) @ k2
        f = np.exp(-n * np.exp(log_t))
        if not model.unit_b:
            f = f * model.b(xi)
        return math.fsum(f), math.fsum(f * f)

    parts = _run_chunks(job, _chunks(samples), workers)
    return _mc_estimate(parts, samples, n, "monte_carlo")


def _mc_estimate(parts, samples, n, method):
    mean, se = _mean_se(parts, samples)
    if mean <= 0:
        return EvidenceEstimate(-math.inf, method, math.inf, n, converged=False)
    half = _Z95 * se
    return EvidenceEstimate(math.log(mean), method, half / mean, n, True,
                            {"mean": mean, "se": se, "samples": samples})


# ---------------------------------------------------------------------------
# order regression and surrogate bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundsFit:
    lambda_true: float
    multiplicity: int
    lambda_hat: float
    loglog_coef: float
    intercept: float
    n_grid: tuple
    log_z: tuple
    residuals: tuple
    normalized: tuple
    band: float

    def to_dict(self):
        return asdict(self)


def _best_estimate(model, n, tol=1e-11):
    if model.unit_b:
        try:
            return evidence_exact_rep(model, n)
        except (UnsupportedModelError, ConditioningError):
            pass
    return evidence_quadrature(model, n, tol)


def check_theorem21_bounds(model: NormalForm, n_grid: Sequence[float]) -> BoundsFit:
    """Regress log Z_K(n) on (1, -log n, log log n) over the grid."""
    ns = np.asarray(sorted(float(v) for v in n_grid))
    if ns.size < 3 or np.any(ns <= math.e):
        raise DomainError("need at least three grid points, all above e")
    if math.log10(ns[-1] / ns[0]) < 3 - 1e-9:
        raise DomainError("grid must span at least three decades")
    rl = compute_rlct(model)
    logz = np.array([_best_estimate(model, n).log_value for n in ns])
    X = np.column_stack([np.ones_like(ns), -np.log(ns), np.log(np.log(ns))])
    coef, *_ = np.linalg.lstsq(X, logz, rcond=None)
    resid = logz - X @ coef
    norm = logz + rl.lambda_ * np.log(ns) - (rl.multiplicity - 1) * np.log(np.log(ns))
    band = float(np.exp(norm.max() - norm.min()))
    return BoundsFit(rl.lambda_, rl.multiplicity, float(coef[1]), float(coef[2]),
                     float(coef[0]), tuple(ns), tuple(logz), tuple(resid),
                     tuple(np.exp(norm)), band)


@dataclass(frozen=True)
class SandwichReport:
    n: float
    log_value: float
    log_lower: float
    log_upper: float
    log_upper_sum: Optional[float]
    lower_ok: bool
    upper_ok: bool
    upper_sum_ok: Optional[bool]

    @property
    def holds(self) -> bool:
        return self.lower_ok and self.upper_ok


def stochastic_order_bounds(model: NormalForm, n: float) -> SandwichReport:
    """Gamma-surrogate bounds for mixed thresholds.

    Z_l ~ Gamma(m1, lam1*) and Z_c ~ Gamma(dbar - m1, lam2*).  The reported
    upper bound is E exp(-n T_l) + E exp(-n T_c).  ``log_upper_sum`` holds the
    bound E exp(-n T_u) with Z_u = Z_l + Z_c (computed by quadrature of the
    equivalent surrogate model when it has at most three coordinates).
    """
    if not model.unit_b:
        raise UnsupportedModelError("surrogate bounds need b == 1")
    lams = sorted(float(v) for v in coord_lambdas(model) if v is not None)
    uniq = []
    for v in lams:
        if not uniq or not lambdas_equal(uniq[-1][0], v):
            uniq.append([v, 1])
        else:
            uniq[-1][1] += 1
    if len(uniq) < 2:
        raise UnsupportedModelError("need at least two distinct thresholds")
    (l1, m1), (l2, _) = uniq[0], uniq[1]
    dbar = len(lams)
    true = evidence_quadrature(model, n, 1e-11).log_value if dbar <= 3 else \
        _best_estimate(model, n).log_value
    lo = log_gamma_surrogate(m1, l1, n)
    hi_c = log_gamma_surrogate(dbar - m1, l2, n)
    hi = float(np.logaddexp(lo, hi_c))
    up_sum = None
    if dbar <= 3:
        sur = NormalForm.from_lambdas([l1] * m1 + [l2] * (dbar - m1))
        up_sum = evidence_quadrature(sur, n, 1e-11).log_value
    slack = 1e-9
    return SandwichReport(
        float(n), true, lo, hi, up_sum,
        lo <= true + slack, true <= hi + slack,
        None if up_sum is None else true <= up_sum + slack,
    )


# ---------------------------------------------------------------------------
# conditional sampler given Z = -log K(xi)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionalXiSample:
    z: np.ndarray
    xi_I: np.ndarray
    xi_J: np.ndarray
    I: tuple
    J: tuple

    def xi(self) -> np.ndarray:
        out = np.empty((self.z.shape[0], len(self.I) + len(self.J)))
        out[:, list(self.I)] = self.xi_I
        if self.J:
            out[:, list(self.J)] = self.xi_J
        return out


def _equal_lambda_class(model: NormalForm):
    lams = coord_lambdas(model)
    I = tuple(j for j, v in enumerate(lams) if v is not None)
    J = tuple(j for j, v in enumerate(lams) if v is None)
    first = lams[I[0]]
    if not all(lambdas_equal(first, lams[j]) for j in I):
        raise UnsupportedModelError("all coordinates with k_j > 0 must share one threshold")
    return float(first), I, J


def _conditional_draw(rng, model, I, J, z):
    size = z.shape[0]
    m = len(I)
    if m == 1:
        split = np.ones((size, 1))
    else:
        e = rng.standard_exponential((size, m))
        split = e / e.sum(axis=1, keepdims=True)
    zj = z[:, None] * split
    k = np.array([model.k[j] for j in I], dtype=float)
    xi_I = np.exp(-zj / (2.0 * k))
    if J:
        u = 1.0 - rng.random((size, len(J)))
        xi_J = u ** (1.0 / (np.array([model.h[j] for j in J]) + 1.0))
    else:
        xi_J = np.empty((size, 0))
    return xi_I, xi_J


def sample_conditional_xi(model: NormalForm, seed: int = 0, size: int = 1,
                          z: Union[None, float, np.ndarray] = None) -> ConditionalXiSample:
    """Draw Z ~ Gamma(m, lam) (or use the given z), then xi_I | Z by a flat Dirichlet split."""
    lam, I, J = _equal_lambda_class(model)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))
    if z is None:
        zs = rng.gamma(len(I), 1.0 / lam, size)
    else:
        zs = np.broadcast_to(np.asarray(z, dtype=float), (size,)).copy()
        if np.any(zs < 0):
            raise DomainError("z must be nonnegative")
    xi_I, xi_J = _conditional_draw(rng, model, I, J, zs)
    return ConditionalXiSample(zs, xi_I, xi_J, I, J)


def evidence_mc_conditional(model: NormalForm, n: float, samples: int = 1_000_000,
                            seed: int = 0, workers: int = 1) -> EvidenceEstimate:
    """Monte Carlo evidence through the (Z, Dirichlet) construction of xi."""
    _check_n(n)
    lam, I, J = _equal_lambda_class(model)
    k2 = 2.0 * np.asarray(model.k, dtype=float)

    def job(i, size):
        rng = _chunk_rng(seed, 1, i)
        z = rng.gamma(len(I), 1.0 / lam, size)
        xi_I, xi_J = _conditional_draw(rng, model, I, J, z)
        xi = ConditionalXiSample(z, xi_I, xi_J, I, J).xi()
        f = np.exp(-n * np.exp(np.log(xi) @ k2))
        return math.fsum(f), math.fsum(f * f)

    parts = _run_chunks(job, _chunks(samples), workers)
    return _mc_estimate(parts, samples, n, "monte_carlo")


# ---------------------------------------------------------------------------
# decomposition of the random evidence
# ---------------------------------------------------------------------------

WnLike = Union[None, float, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class Theorem23Report:
    n: float
    lam: float
    m: int
    lhs: float
    lhs_error: float
    leading: float
    leading_se: float
    remainder: float
    remainder_se: float
    combined_se: float
    residual: float
    within_3se: bool
    remainder_stated: float
    remainder_stated_se: float
    combined_se_stated: float
    residual_stated: float
    within_3se_stated: bool
    decay_ratio: float
    decay_ratio_stated: float
    extrapolated: bool
    mc_samples: int

    def to_dict(self):
        return asdict(self)


def _gl_panels(edges, order):
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * x + 0.5 * (b + a)
    weights = 0.5 * (b - a) * w
    return nodes.ravel(), weights.ravel()


def _inner_edges(beta, k):
    pts = {0.0, 1.0}
    if k > 0 and beta > 0:
        s = beta ** (-1.0 / (2.0 * k))
        pts.update(p for p in (s * 2.0 ** i for i in range(-5, 10)) if 0 < p < 1)
    pts.update(np.linspace(0, 1, 9))
    return np.array(sorted(pts))


def _lhs_quadrature(model, n, wn, tol):
    """int phi_bar(xi) exp(-n K(xi) - sqrt(n) xi^k W(xi)) d xi for d <= 2."""
    d = model.d
    ks = np.asarray(model.k, dtype=float)
    hs = np.asarray(model.h, dtype=float)
    sqn = math.sqrt(n)

    def integrand(xi):
        xk = np.prod(xi ** ks, axis=-1)
        dens = np.prod((hs + 1.0) * xi ** hs, axis=-1)
        w = np.asarray(wn(xi), dtype=float)
        return dens * np.exp(-n * xk * xk - sqn * xk * w)

    if d == 1:
        edges = _inner_edges(n, model.k[0])
        x, wts = _gl_panels(edges, 30)
        x2, wts2 = _gl_panels(edges, 15)
        v = float(integrand(x[:, None]) @ wts)
        v2 = float(integrand(x2[:, None]) @ wts2)
        return v, abs(v - v2)
    if d != 2:
        raise UnsupportedModelError("left-hand side quadrature needs d <= 2")

    inner_err = [0.0]

    def outer(u):
        beta = n * u ** (2 * model.k[0])
        edges = _inner_edges(beta, model.k[1])
        x, wts = _gl_panels(edges, 24)
        x2, wts2 = _gl_panels(edges, 12)
        pts = np.column_stack([np.full_like(x, u), x])
        pts2 = np.column_stack([np.full_like(x2, u), x2])
        v = float(integrand(pts) @ wts)
        v2 = float(integrand(pts2) @ wts2)
        inner_err[0] = max(inner_err[0], abs(v - v2))
        return v

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(outer, 0.0, 1.0, points=_breakpoints(n, model.k[0]),
                                  epsabs=0.0, epsrel=max(tol, 1e-13), limit=400)
    return val, err + inner_err[0]


def theorem23_check(model: NormalForm, n: float, wn: WnLike = None,
                    mc_samples: int = 1_000_000, seed: int = 0, workers: int = 1,
                    lhs_tol: float = 1e-10) -> Theorem23Report:
    """Compare the random evidence with its leading term plus remainder.

    ``wn`` is None (W_n == 0), a constant, or a vectorized callable mapping
    points of shape (N, d) in the unit cube to W_n values.  Two remainders are
    reported: the full one, summing j = 0..m-2 in the binomial expansion of
    (log n - log t)^{m-1}, and the truncated one summing j = 1..m-2.
    """
    if not model.unit_b:
        raise UnsupportedModelError("decomposition check needs b == 1")
    if not n > 1:
        raise DomainError("n must exceed 1")
    lam, I, J = _equal_lambda_class(model)
    m = len(I)
    logn = math.log(n)

    # ---- left-hand side -------------------------------------------------
    if wn is None or isinstance(wn, (int, float)):
        c = 0.0 if wn is None else float(wn)
        if not math.isfinite(c):
            raise DomainError("W_n must be finite")
        log_g = _gamma_log_density(m, lam)
        # on the conditional set sqrt(n) xi^k = sqrt(t)
        mod = None if c == 0 else (lambda t: math.exp(-c * math.sqrt(t)))
        lhs, lhs_err = _integrate_z(log_g, n, [lam], modifier=mod, tol=1e-12)
        lhs_err += 1e-15 * lhs
        wfun = None if c == 0 else (lambda xi: np.full(xi.shape[0], c))
    else:
        lhs, lhs_err = _lhs_quadrature(model, n, wn, lhs_tol)
        lhs_err = max(lhs_err, 1e-15 * abs(lhs))
        wfun = wn
    # the expectation under the normalized prior is Z(n) * prod(h_j + 1)

    # ---- Monte Carlo right-hand side --------------------------------------
    cm = lam ** m / math.gamma(m)
    norm_t = math.gamma(lam) * sps.gammainc(lam, n)  # int_0^n t^{lam-1} e^{-t} dt
    scale = norm_t * cm * n ** (-lam)
    binom = [math.comb(m - 1, j) for j in range(m)]

    def job(i, size):
        rng = _chunk_rng(seed, 3, i)
        u = rng.random(size)
        t = sps.gammaincinv(lam, u * sps.gammainc(lam, n))
        t = np.clip(t, 1e-300, n)
        z = np.log(n / t)
        xi_I, xi_J = _conditional_draw(rng, model, I, J, z)
        w = np.ones(size)
        if wfun is not None:
            xi = ConditionalXiSample(z, xi_I, xi_J, I, J).xi()
            wv = np.asarray(wfun(xi), dtype=float)
            if not np.all(np.isfinite(wv)):
                raise DomainError("W_n returned non-finite values")
            w = np.exp(-np.sqrt(t) * wv)
        lead = scale * logn ** (m - 1) * w
        full = scale * (z ** (m - 1) - logn ** (m - 1)) * w
        mlt = -np.log(t)
        stated = np.zeros(size)
        for j in range(1, m - 1):
            stated += binom[j] * logn ** j * mlt ** (m - 1 - j)
        stated = scale * stated * w
        tot = lead + full
        tot_s = lead + stated
        out = []
        for arr in (lead, full, stated, tot, tot_s):
            out.append((math.fsum(arr), math.fsum(arr * arr)))
        return out

    parts = _run_chunks(job, _chunks(mc_samples), workers)
    stats = [_mean_se([p[q] for p in parts], mc_samples) for q in range(5)]
    (lead, lead_se), (rem, rem_se), (rem_s, rem_s_se), (tot, tot_se), (tot_s, tot_s_se) = stats
    comb = math.hypot(tot_se, lhs_err)
    comb_s = math.hypot(tot_s_se, lhs_err)
    lead_order = n ** (-lam) * logn ** (m - 1)
    resid = lhs - tot
    resid_s = lhs - tot_s
    return Theorem23Report(
        n=float(n), lam=lam, m=m, lhs=lhs, lhs_error=lhs_err,
        leading=lead, leading_se=lead_se, remainder=rem, remainder_se=rem_se,
        combined_se=comb, residual=resid, within_3se=abs(resid) <= 3 * comb,
        remainder_stated=rem_s, remainder_stated_se=rem_s_se,
        combined_se_stated=comb_s, residual_stated=resid_s,
        within_3se_stated=abs(resid_s) <= 3 * comb_s,
        decay_ratio=abs(rem) / lead_order, decay_ratio_stated=abs(rem_s) / lead_order,
        extrapolated=len(J) == 0, mc_samples=mc_samples,
    )
