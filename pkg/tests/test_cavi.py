import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from singvi import cavi
from singvi.errors import DomainError
from singvi.normal_form import NormalForm, elbo_product

PAIRS = [(0.5, 0.5), (0.5, 0.75), (0.25, 1.0), (0.25, 0.25)]


def model_for(l1, l2):
    return NormalForm.from_lambdas([l1, l2])


def test_step_is_exact_coordinate_maximizer():
    # mu2 is updated last, so perturbing it away from the update lowers the ELBO
    m = model_for(0.5, 0.75)
    n = 1e3
    s = cavi.cavi_step(cavi.CaviState(0.3, 0.01, n, m))
    base = cavi.elbo_at(s)
    for eps in (1e-3, -1e-3, 1e-5):
        other = cavi.CaviState(s.mu1, s.mu2 * (1 + eps), n, m)
        assert cavi.elbo_at(other) <= base + 1e-12


def test_elbo_at_matches_product_form():
    m = model_for(0.25, 1.0)
    st_ = cavi.CaviState(0.2, 0.05, 500.0, m)
    assert cavi.elbo_at(st_) == pytest.approx(elbo_product(m, st_.as_mean_field(), 500.0), abs=1e-12)


@pytest.mark.parametrize("l1,l2", PAIRS)
def test_global_attraction(l1, l2):
    m = model_for(l1, l2)
    rng = np.random.default_rng(2)
    for n in (1e2, 1e5, 1e8):
        pts = []
        for x0 in rng.uniform(0, l1 / (l1 + 1), 6):
            mu1, mu2, tr = cavi.solve_fixed_point(m, n, init=float(x0))
            assert tr.converged
            pts.append((mu1, mu2))
        pts = np.array(pts)
        assert np.ptp(pts, axis=0).max() <= 1e-8 * pts.max()


@pytest.mark.parametrize("l1,l2", PAIRS)
def test_trace_is_monotone(l1, l2):
    _, _, tr = cavi.solve_fixed_point(model_for(l1, l2), 1e4, init=1e-6)
    d = np.diff(tr.elbo)
    assert np.all(d >= -1e-12 * np.abs(tr.elbo[1:]))


def test_symmetric_bound_and_polish():
    m = model_for(0.5, 0.5)
    for n in (1e2, 1e4, 1e8):
        mu1, mu2, tr = cavi.solve_fixed_point(m, n)
        assert mu1 == mu2 <= math.sqrt(0.5 / n)
        assert tr.residual <= 1e-14 * mu2


def test_strict_mode_reports_unconverged_orbit():
    from singvi.errors import ConvergenceError

    with pytest.raises(ConvergenceError) as info:
        cavi.solve_fixed_point(model_for(0.5, 0.5), 1e6, max_iter=5, strict=True)
    assert info.value.best is not None


@given(st.floats(0.05, 3.0), st.floats(0.05, 3.0))
def test_constraint_root(alpha, beta):
    z = cavi.solve_constraint(alpha, beta)
    if alpha <= beta:
        assert z is None
    else:
        from singvi.special import moment_G
        assert z * moment_G(alpha, z) == pytest.approx(beta, rel=1e-10)


@pytest.mark.parametrize("l1,l2", PAIRS)
def test_order_report(l1, l2):
    rep = cavi.fixed_point_orders(model_for(l1, l2), np.logspace(2, 8, 7))
    assert rep.ok, rep.to_dict()


def test_asymmetric_limits():
    # lam1 < lam2: mu1 tends to a constant c1 with c1 * c2 = lam1 and n mu2 -> c2
    rep = cavi.fixed_point_orders(model_for(0.5, 0.75), np.logspace(2, 8, 7))
    c1, c2 = rep.limits["c1"], rep.limits["c2"]
    assert c1 * c2 == pytest.approx(0.5)
    assert rep.mu1[-1] == pytest.approx(c1, rel=1e-3)
    assert rep.n_grid[-1] * rep.mu2[-1] == pytest.approx(c2, rel=1e-3)


@pytest.mark.parametrize("l1,l2", PAIRS)
def test_slope(l1, l2):
    fit = cavi.elbo_slope_fit(model_for(l1, l2), np.logspace(2, 6, 5))
    assert fit.slope == pytest.approx(-min(l1, l2), abs=0.05)


def test_rejects_bad_input():
    with pytest.raises(DomainError):
        cavi.solve_fixed_point(model_for(0.5, 0.5), -1.0)
    with pytest.raises(DomainError):
        cavi.solve_fixed_point(model_for(0.5, 0.5), 10.0, tol=0.0)
    with pytest.raises(DomainError):
        cavi.elbo_slope_fit(model_for(0.5, 0.5), [100.0])
