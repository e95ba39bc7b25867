import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from singvi import special
from singvi._backend import BACKEND
from singvi.errors import DomainError


def quad_B(k, h, beta):
    f = lambda u: u ** h * math.exp(-beta * u ** (2 * k))
    pts = [min(1.0, (1.0 / beta) ** (1.0 / (2 * k)) * s) for s in (0.5, 1, 2, 4)] if beta > 0 else None
    val, _ = integrate.quad(f, 0.0, 1.0, points=pts, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def mp_P(a, x):
    return float(mpmath.gammainc(a, 0, x, regularized=True))


@pytest.mark.parametrize("a,x", [(0.5, 1e-3), (0.5, 2.0), (1.0, 1.0), (3.7, 0.2),
                                 (2.0, 50.0), (10.0, 9.0), (0.25, 1e4), (40.0, 45.0)])
def test_incomplete_gamma_matches_mpmath(a, x):
    assert special.reg_lower_inc_gamma(a, x) == pytest.approx(mp_P(a, x), abs=1e-14, rel=1e-13)


def test_log_gamma_far_tail_is_finite():
    # P(a, x) underflows in linear space but its log is still accurate
    lp = special.log_reg_lower_inc_gamma(50.0, 1e-3)
    ref = float(mpmath.log(mpmath.gammainc(50.0, 0, 1e-3, regularized=True)))
    assert lp == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("k,h,beta", [(1, 0, 0.0), (1, 0, 3.0), (2, 1, 40.0),
                                      (1, 2.5, 1e3), (3, 0, 1e6), (1, 0.5, 0.01)])
def test_B_matches_quadrature(k, h, beta):
    assert special.norm_B(k, h, beta).value == pytest.approx(quad_B(k, h, beta), rel=1e-11)


def test_B_large_beta_asymptotics():
    # B ~ Gamma(lam) / (2k beta^lam) once the cutoff at 1 is irrelevant
    k, h, beta = 2, 1, 1e8
    lam = (h + 1) / (2 * k)
    ref = math.lgamma(lam) - math.log(2 * k) - lam * math.log(beta)
    assert special.log_norm_B(k, h, beta) == pytest.approx(ref, abs=1e-13)


@pytest.mark.parametrize("lam,beta", [(0.5, 0.0), (0.5, 1e-6), (0.25, 2.0), (1.5, 30.0),
                                      (0.75, 1e5), (2.0, 1e8)])
def test_G_matches_mpmath(lam, beta):
    a = mpmath.mpf(lam)
    b = mpmath.mpf(beta)
    if beta == 0:
        ref = lam / (lam + 1)
    else:
        ref = float(mpmath.gammainc(a + 1, 0, b) / (b * mpmath.gammainc(a, 0, b)))
    assert special.moment_G(lam, beta) == pytest.approx(ref, rel=1e-13)


def test_G_is_moment_of_arm():
    k, h, beta = 2, 1.0, 17.0
    num, _ = integrate.quad(lambda u: u ** (h + 2 * k) * math.exp(-beta * u ** (2 * k)), 0, 1,
                            epsabs=0, epsrel=1e-13)
    assert special.moment_G((h + 1) / (2 * k), beta) == pytest.approx(num / quad_B(k, h, beta),
                                                                      rel=1e-11)


def test_kl_against_quadrature():
    k, h, beta = 1, 1.0, 25.0
    lam = (h + 1) / (2 * k)
    logB = special.log_norm_B(k, h, beta)

    def integrand(u):
        logf = h * math.log(u) - beta * u ** 2 - logB
        logp = math.log(h + 1) + h * math.log(u)
        return math.exp(logf) * (logf - logp)

    ref, _ = integrate.quad(integrand, 1e-300, 1, epsabs=1e-14, epsrel=1e-12, limit=200)
    assert special.arm_kl(lam, beta) == pytest.approx(ref, abs=1e-11)


@given(st.floats(0.05, 20.0), st.floats(1e-4, 1e3))
def test_recurrence_residual(a, x):
    assert abs(special.gamma_recurrence_check(a, x)) < 1e-12


@given(st.floats(0.05, 8.0), st.floats(0.0, 1e7))
def test_G_in_range(lam, beta):
    g = special.moment_G(lam, beta)
    assert 0.0 < g <= lam / (lam + 1) * (1 + 1e-14)
    if beta > 0:
        assert g <= lam / beta * (1 + 1e-12)


@given(st.floats(0.05, 8.0), st.floats(0.0, 1e6), st.floats(1.0001, 10.0))
def test_G_decreasing_in_beta(lam, beta, factor):
    assert special.moment_G(lam, beta * factor) <= special.moment_G(lam, beta) * (1 + 1e-13)


@given(st.floats(0.05, 8.0), st.floats(0.0, 1e7))
def test_kl_nonnegative(lam, beta):
    assert special.arm_kl(lam, beta) >= -1e-13


def test_kl_depends_only_on_lambda():
    # (k, h) = (1, 0) and (2, 1) share lam = 1/2
    beta = 300.0
    b1 = special.log_norm_B(1, 0, beta)
    b2 = special.log_norm_B(2, 1, beta)
    g = special.moment_G(0.5, beta)
    kl1 = -beta * g - b1 - math.log(1.0)
    kl2 = -beta * g - b2 - math.log(2.0)
    assert kl1 == pytest.approx(kl2, abs=1e-12)
    assert special.arm_kl(0.5, beta) == pytest.approx(kl1, abs=1e-12)


def test_vector_kernels_match_scalar():
    betas = np.array([0.0, 1e-3, 0.7, 5.0, 1e4, 1e8])
    vec = special.moment_G_array(0.75, betas)
    assert np.allclose(vec, [special.moment_G(0.75, b) for b in betas], rtol=0, atol=0)


def test_logvalue_roundtrip():
    v = special.LogValue.from_value(3.5e-300)
    assert v.value == pytest.approx(3.5e-300, rel=1e-15)
    with pytest.raises(DomainError):
        special.LogValue.from_value(-1.0)


@pytest.mark.parametrize("call", [
    lambda: special.reg_lower_inc_gamma(0.0, 1.0),
    lambda: special.reg_lower_inc_gamma(1.0, -1.0),
    lambda: special.moment_G(0.5, -1.0),
    lambda: special.log_norm_B(0, 0, 1.0),
    lambda: special.moment_G_array(0.5, [-1.0]),
])
def test_domain_errors(call):
    with pytest.raises(DomainError):
        call()


def test_backend_reported():
    assert BACKEND in ("cython", "python")
