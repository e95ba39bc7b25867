import math

import numpy as np
import pytest
from scipy import integrate

from singvi import cavi
from singvi import nn_example as nn
from singvi.errors import DomainError
from singvi.normal_form import NormalForm


def quad_H(t):
    val, _ = integrate.quad(lambda x: math.tanh(t * x) ** 2, 0, 1, epsabs=0, epsrel=1e-13)
    return val


@pytest.mark.parametrize("t", [1e-4, 0.05, 0.0999, 0.1, 0.3, 1.0])
def test_K0_against_quadrature(t):
    assert nn.K0(t) == pytest.approx(quad_H(t) / t ** 2, rel=1e-12)
    assert nn.H(t) == pytest.approx(quad_H(t), rel=1e-11, abs=1e-16)


def test_K0_at_origin_and_series_switch():
    assert nn.K0(0.0) == pytest.approx(1 / 3, rel=1e-15)
    lo, hi = nn.K0(0.1 - 1e-12), nn.K0(0.1 + 1e-12)
    assert abs(lo - hi) < 1e-13


def test_transform_roundtrip_and_derivative():
    t = np.linspace(0, 1, 201)
    xi = nn.g_transform(t)
    assert np.all(np.diff(xi) > 0)
    assert np.max(np.abs(nn.g_inverse(xi) - t)) < 1e-12
    h = 1e-6
    for t0 in (0.02, 0.099, 0.2, 0.7):
        fd = (nn.g_transform(t0 + h) - nn.g_transform(t0 - h)) / (2 * h)
        assert nn.g_prime(t0) == pytest.approx(fd, rel=1e-7)
    assert nn.g_prime(0.0) == pytest.approx(1 / math.sqrt(6), rel=1e-14)
    with pytest.raises(DomainError):
        nn.g_inverse(0.5)


def test_normal_form_reduction_on_grid():
    th = np.linspace(0, 1, 50)
    worst = 0.0
    for t2 in th:
        h_ref = quad_H(t2)
        for t1 in th:
            k_ref = 0.5 * t1 ** 2 * h_ref
            xi1, xi2 = t1, nn.g_transform(t2)
            worst = max(worst, abs(k_ref - xi1 ** 2 * xi2 ** 2))
    assert worst < 1e-10


def closed_H(t):
    return t * t / 3.0 if t < 1e-5 else 1.0 - math.tanh(t) / t


def test_deterministic_evidence_against_dblquad():
    n = 100.0
    val, _ = integrate.dblquad(lambda t2, t1: math.exp(-n * 0.5 * t1 ** 2 * closed_H(t2)), 0, 1, 0, 1,
                               epsabs=1e-12, epsrel=1e-10)
    assert nn.log_evidence_deterministic(n) == pytest.approx(math.log(val), abs=1e-8)


def test_dataset_roundtrip(tmp_path):
    d = nn.simulate(50, 3)
    p = tmp_path / "d.npz"
    d.save(p)
    e = nn.NnDataset.load(p)
    assert e.seed == 3 and np.array_equal(e.x, d.x) and np.array_equal(e.y, d.y)
    assert np.array_equal(nn.simulate(50, 3).y, d.y)
    with pytest.raises(DomainError):
        nn.simulate(0, 1)


def test_wn_matches_log_likelihood_ratio():
    d = nn.simulate(300, 9)
    for t1, t2 in [(0.3, 0.4), (0.9, 0.05), (0.1, 1.0)]:
        f = t1 * np.tanh(t2 * d.x)
        llr = math.fsum(-d.y * f + 0.5 * f * f)
        K = float(nn.population_K(t1, t2))
        xi2 = nn.g_transform(t2)
        direct = (llr - d.n * K) / (math.sqrt(d.n) * t1 * xi2)
        assert nn.wn_process(d, [t1, xi2]) == pytest.approx(direct, rel=1e-9)


def test_wn_finite_on_axes():
    d = nn.simulate(100, 1)
    vals = nn.wn_process(d, np.array([[0.0, 0.0], [0.0, 0.2], [0.5, 0.0]]))
    assert np.all(np.isfinite(vals))


def test_transformed_without_jacobian_is_symmetric_normal_form():
    n = 1e4
    tr = nn.cavi_transformed(n, jacobian_on=False)
    mu1, mu2, _ = cavi.solve_fixed_point(NormalForm((1, 1), (0, 0)), n)
    assert tr.F1[-1] == pytest.approx(mu1, rel=1e-10)
    assert tr.F2[-1] == pytest.approx(mu2, rel=1e-10)


def test_transformed_fixed_point_scaling():
    tr = nn.cavi_transformed(1e6)
    assert tr.converged and tr.monotone(1e-10)
    assert 1e6 * tr.F1[-1] * tr.F2[-1] == pytest.approx(0.5, rel=0.02)


def test_original_coordinates_monotone():
    tr = nn.cavi_original(nn.simulate(400, 2))
    assert tr.converged
    assert tr.monotone(1e-10)


def test_original_elbo_below_log_marginal():
    d = nn.simulate(200, 4)
    tr = nn.cavi_original(d)
    const = -0.5 * d.n * math.log(2 * math.pi)

    def integrand(t2, t1):
        r = d.y - t1 * np.tanh(t2 * d.x)
        return math.exp(-0.5 * float(r @ r) + 0.5 * float(d.y @ d.y))

    val, _ = integrate.dblquad(integrand, 0, 1, 0, 1, epsabs=1e-12, epsrel=1e-9)
    log_marg = const - 0.5 * float(d.y @ d.y) + math.log(val)
    assert tr.final_elbo <= log_marg + 1e-8
    assert log_marg - tr.final_elbo < 2.0
