"""Normal-crossing models, their RLCT, and product-form variational states."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import special
from .errors import DomainError, UnsupportedModelError

__all__ = [
    "NormalForm",
    "RlctResult",
    "VariationalArm",
    "MeanFieldState",
    "compute_rlct",
    "K_eval",
    "candidate_rho",
    "elbo_product",
    "register_b",
    "resolve_b",
    "lambdas_equal",
]


# -- prior factor registry ---------------------------------------------------

@dataclass(frozen=True)
class PriorFactor:
    name: str
    func: Callable[[np.ndarray], np.ndarray]
    lower_bound: float


_B_REGISTRY: dict[str, PriorFactor] = {}


def register_b(name: str, func, lower_bound: float) -> PriorFactor:
    """Register a named positive prior factor b(xi), vectorized over (..., d)."""
    if not lower_bound > 0:
        raise DomainError("prior factor needs a positive lower bound")
    pf = PriorFactor(name, func, float(lower_bound))
    _B_REGISTRY[name] = pf
    return pf


def resolve_b(name: str) -> PriorFactor:
    if name not in _B_REGISTRY and name.startswith("nn_"):
        from . import nn_example  # noqa: F401  (registers its factors)
    try:
        return _B_REGISTRY[name]
    except KeyError:
        raise DomainError(f"unknown prior factor {name!r}") from None


register_b("two_plus_sin", lambda xi: 2.0 + np.sin(np.asarray(xi)[..., 0]), 1.0)


# -- model -------------------------------------------------------------------

def _as_lambda(k, h):
    """Exact rational lambda when h is integral, float otherwise."""
    if float(h).is_integer():
        return Fraction(int(h) + 1, 2 * int(k))
    return (h + 1.0) / (2.0 * k)


def lambdas_equal(a, b) -> bool:
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a == b
    return math.isclose(float(a), float(b), rel_tol=1e-12, abs_tol=0.0)


@dataclass(frozen=True)
class NormalForm:
    """K(xi) = prod xi_j^{2 k_j} on [0,1]^d with prior b(xi) prod xi_j^{h_j}."""

    k: tuple
    h: tuple
    b_name: str = "one"

    def __post_init__(self):
        k = tuple(int(v) for v in self.k)
        if any(float(a) != b for a, b in zip(self.k, k)):
            raise DomainError("k must be integers")
        h = tuple(float(v) for v in self.h)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "h", h)
        if len(k) == 0:
            raise DomainError("dimension must be at least 1")
        if len(k) != len(h):
            raise DomainError("k and h must have equal length")
        if any(v < 0 for v in k):
            raise DomainError("k must be nonnegative")
        if max(k) < 1:
            raise DomainError("at least one k_j must be positive")
        if any(not (v >= 0) or math.isinf(v) for v in h):
            raise DomainError("h must be finite and nonnegative")
        if self.b_name != "one":
            resolve_b(self.b_name)

    @property
    def d(self) -> int:
        return len(self.k)

    @property
    def unit_b(self) -> bool:
        return self.b_name == "one"

    @property
    def prior_factor(self) -> Optional[PriorFactor]:
        return None if self.unit_b else resolve_b(self.b_name)

    def b(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.unit_b:
            return np.ones(xi.shape[:-1])
        return np.asarray(self.prior_factor.func(xi), dtype=float)

    def to_dict(self) -> dict:
        h = [int(v) if v.is_integer() else v for v in self.h]
        return {"k": list(self.k), "h": h, "d": self.d, "b": self._b_token()}

    def _b_token(self):
        return "one" if self.unit_b else f"named:{self.b_name}"

    @classmethod
    def from_dict(cls, obj) -> "NormalForm":
        if not isinstance(obj, dict):
            raise DomainError("model must be a JSON object")
        try:
            k, h = obj["k"], obj["h"]
        except KeyError as exc:
            raise DomainError(f"model is missing field {exc.args[0]!r}") from None
        if not isinstance(k, list) or not isinstance(h, list):
            raise DomainError("k and h must be lists")
        if "d" in obj and obj["d"] != len(k):
            raise DomainError("d does not match the length of k")
        token = obj.get("b", "one")
        if token == "one":
            name = "one"
        elif isinstance(token, str) and token.startswith("named:"):
            name = token[len("named:"):]
        else:
            raise DomainError(f"unrecognized prior factor {token!r}")
        try:
            return cls(tuple(k), tuple(h), name)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, DomainError):
                raise
            raise DomainError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "NormalForm":
        try:
            obj = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DomainError(f"cannot read model file: {exc}") from None
        return cls.from_dict(obj)

    @classmethod
    def from_lambdas(cls, lambdas: Sequence[float]) -> "NormalForm":
        """Build a model whose coordinates have the requested thresholds.

        Uses k=1, h=2*lam-1 when that is nonnegative; otherwise the smallest
        integer k with h = 2*k*lam - 1 >= 0.
        """
        ks, hs = [], []
        for lam in lambdas:
            lam = float(lam)
            if not lam > 0:
                raise DomainError("lambda values must be positive")
            k = max(1, math.ceil(1.0 / (2.0 * lam) - 1e-12))
            h = 2.0 * k * lam - 1.0
            ks.append(k)
            hs.append(0.0 if abs(h) < 1e-12 else h)
        return cls(tuple(ks), tuple(hs))


@dataclass(frozen=True)
class RlctResult:
    lambda_: float
    multiplicity: int
    per_coord_lambda: tuple
    argmin_indices: tuple

    def to_dict(self):
        return {"lambda": self.lambda_, "multiplicity": self.multiplicity}


def coord_lambdas(model: NormalForm) -> list:
    """Per-coordinate thresholds (exact where possible); None where k_j = 0."""
    return [_as_lambda(k, h) if k > 0 else None for k, h in zip(model.k, model.h)]


def compute_rlct(model: NormalForm) -> RlctResult:
    lams = coord_lambdas(model)
    finite = [v for v in lams if v is not None]
    best = min(finite, key=float)
    argmin = tuple(j for j, v in enumerate(lams) if v is not None and lambdas_equal(v, best))
    per = tuple(math.inf if v is None else float(v) for v in lams)
    return RlctResult(float(best), len(argmin), per, argmin)


def K_eval(model: NormalForm, xi) -> float:
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (model.d,):
        raise DomainError(f"xi must have shape ({model.d},)")
    if np.any(xi < 0) or np.any(xi > 1):
        raise DomainError("xi must lie in the unit cube")
    return float(np.prod(xi ** (2 * np.asarray(model.k))))


# -- variational states --------------------------------------------------------

@dataclass(frozen=True)
class VariationalArm:
    """Density u^h exp(-beta u^{2k}) / B(k, h, beta) on [0, 1]."""

    k: int
    h: float
    beta: float

    def __post_init__(self):
        if self.k <= 0:
            raise DomainError("arms need k > 0")
        if not self.beta >= 0:
            raise DomainError("beta must be nonnegative")

    @property
    def lam(self) -> float:
        return special.arm_lambda(self.k, self.h)

    def moment(self) -> float:
        return special.moment_G(self.lam, self.beta)

    def log_norm(self) -> float:
        return special.log_norm_B(self.k, self.h, self.beta)

    def kl_to_prior(self) -> float:
        return special.arm_kl(self.lam, self.beta)

    def logpdf(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            return self.h * np.log(u) - self.beta * u ** (2 * self.k) - self.log_norm()


@dataclass(frozen=True)
class MeanFieldState:
    arms: tuple = field(default_factory=tuple)

    @property
    def betas(self):
        return tuple(a.beta for a in self.arms)

    @classmethod
    def from_betas(cls, model: NormalForm, betas) -> "MeanFieldState":
        if len(betas) != model.d:
            raise DomainError("need one beta per coordinate")
        return cls(tuple(VariationalArm(k, h, float(b))
                         for k, h, b in zip(model.k, model.h, betas)))


def candidate_rho(model: NormalForm, n: float) -> MeanFieldState:
    """Product state with beta = n on the first argmin coordinate, 1 elsewhere."""
    if not n >= 1:
        raise DomainError("n must be at least 1")
    if min(model.k) < 1:
        raise UnsupportedModelError("candidate state needs k_j > 0 on every coordinate")
    g = compute_rlct(model).argmin_indices[0]
    betas = [1.0] * model.d
    betas[g] = float(n)
    return MeanFieldState.from_betas(model, betas)


def elbo_product(model: NormalForm, state: MeanFieldState, n: float) -> float:
    """Closed-form ELBO of a product of arms against exp(-nK) times the prior."""
    if not model.unit_b:
        raise UnsupportedModelError(
            "closed-form ELBO needs b == 1; integrate numerically for other priors")
    if len(state.arms) != model.d:
        raise DomainError("state dimension does not match the model")
    log_moments = 0.0
    kl = 0.0
    for arm in state.arms:
        g = arm.moment()
        log_moments += math.log(g)
        kl += arm.kl_to_prior()
    return -n * math.exp(log_moments) - kl
