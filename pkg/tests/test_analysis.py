import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_q_points
from mosaic_evo.errors import PreconditionError
from mosaic_evo.ode import (
    boundary_flux,
    density_ratio_series,
    integrate,
    is_monotone,
    jacobian_numeric,
    linear_fixed_point,
    lyapunov_diag,
    nonlinear_fixed_point,
    nonlinear_jacobian,
    stability,
    straightness_residual,
)
from mosaic_evo.stats import q_membership
from mosaic_evo.table import builtin_linear, builtin_nonlinear, rates, vector_field


def test_linear_fixed_points():
    assert linear_fixed_point(0.64).coords == pytest.approx((0.34615, 0.17307), abs=1e-5)
    p = linear_fixed_point(0.685)
    assert p.coords == pytest.approx((0.32391, 0.16195), abs=1e-5)
    assert q_membership(p).outside
    assert linear_fixed_point(1.0).coords == (0.0, 0.0)


def test_nonlinear_fixed_points():
    assert nonlinear_fixed_point(1.0).coords == (0.4, 0.2)
    assert nonlinear_fixed_point(0.125).coords == pytest.approx((0.34615, 0.17307), abs=1e-5)
    assert nonlinear_fixed_point(0.06).coords == pytest.approx((0.33974, 0.16987), abs=1e-5)
    with pytest.raises(ValueError):
        nonlinear_fixed_point(0.0)


def test_fixed_point_locus_on_l1_and_monotone():
    mus = np.geomspace(1e-4, 1e4, 200)
    pts = np.array([nonlinear_fixed_point(m).coords for m in mus])
    assert np.all(pts[:, 1] == pts[:, 0] / 2)
    assert np.all(np.diff(pts[:, 0]) > 0)
    assert pts[0, 0] > 1 / 3 and pts[-1, 0] < 1 / 2
    for p in pts:
        assert q_membership(p).lines == ("L1",)


@given(st.floats(1e-3, 1e3))
def test_fixed_point_is_a_zero_of_the_field(mu):
    fp = nonlinear_fixed_point(mu).coords
    f = vector_field(builtin_nonlinear(1.0, mu), fp)
    assert max(abs(v) for v in f) <= 1e-12 * max(1.0, 1.0 / mu)


def test_stability_mu_one():
    rep = stability(1.0, 1.0)
    assert np.allclose(rep.jacobian, [[-1.8, -0.4], [-0.4, -1.2]], atol=1e-15)
    assert rep.eigenvalues == (-1.0, -2.0)
    v1, v2 = rep.eigenvectors
    assert np.allclose(v1, np.array([1, -2]) / math.sqrt(5), atol=1e-12)
    assert np.allclose(v2, np.array([2, 1]) / math.sqrt(5), atol=1e-12)
    assert rep.stable


@given(st.floats(1e-3, 50), st.floats(1e-2, 10))
def test_eigenpairs(mu, lam1):
    rep = stability(mu, lam1)
    for a, v in zip(rep.eigenvalues, rep.eigenvectors):
        v = np.array(v)
        assert np.linalg.norm(rep.jacobian @ v - a * v) <= 1e-10 * max(1.0, abs(a))
        assert v[0] > 0 or (v[0] == 0 and v[1] > 0)
    # the slow direction is (1, -(mu+1)) up to scale
    v1 = np.array(rep.eigenvectors[0])
    assert abs(v1[1] / v1[0] + (mu + 1)) <= 1e-8 * (mu + 1)


@pytest.mark.parametrize("mu", [0.06, 0.125, 1.0, 10.0])
def test_numeric_jacobian_matches_closed_form(mu):
    fp = nonlinear_fixed_point(mu)
    Jn = jacobian_numeric(builtin_nonlinear(mu, mu), fp)
    assert np.max(np.abs(Jn - nonlinear_jacobian(mu, 1.0))) <= 1e-7
    assert np.trace(Jn) == pytest.approx(-(2 * mu + 1), abs=1e-7)


def test_linear_jacobian_is_scalar(rng):
    q = 0.37
    for p in random_q_points(rng, 5):
        J = jacobian_numeric(builtin_linear(q), p)
        assert np.max(np.abs(J + (4 - 3 * q) * np.eye(2))) <= 1e-7


def test_boundary_flux_examples():
    assert boundary_flux(1.0, (0.45, 0.225), "L1") == pytest.approx(0.0, abs=1e-12)
    assert boundary_flux(1.0, (1 / 6, 1 / 3), "L2") == pytest.approx(1 / 3, abs=1e-12)
    assert boundary_flux(1.0, (1 / 3, 1 / 3), "L4") == pytest.approx(1 / 3, abs=1e-12)
    with pytest.raises(PreconditionError):
        boundary_flux(1.0, (0.3, 0.3), "L2")


@given(st.floats(1e-3, 100), st.floats(0, 1))
def test_boundary_products_match_closed_forms(mu, s):
    x2 = 1 / 6 + s / 6  # L2 runs x in [1/6, 1/3]
    assert boundary_flux(mu, (x2, 0.5 - x2), "L2") == pytest.approx(mu * (0.5 - x2), rel=1e-9, abs=1e-12)
    x3 = 1 / 6 + s / 6
    assert boundary_flux(mu, (x3, 1 / 3), "L3") == pytest.approx(mu / 9 - 1 / 9 + 2 * x3 / 3, rel=1e-9, abs=1e-12)
    x4 = 1 / 3 + s / 6
    assert boundary_flux(mu, (x4, 0.5 - x4 / 2), "L4") == pytest.approx(x4, rel=1e-9, abs=1e-12)


def test_lyapunov_examples():
    V, dv, fac = lyapunov_diag(1.0, 1.0, 0.3, 0.25)
    assert V == pytest.approx(0.2) and dv == pytest.approx(-0.22) and fac == pytest.approx(-0.22)
    V, dv, fac = lyapunov_diag(2.0, 1.0, 0.4, 0.2)
    assert V == 0 and dv == pytest.approx(0.0, abs=1e-15) and fac == 0


def test_lyapunov_decreases_inside(rng):
    pts = random_q_points(rng, 10_000)
    mus = rng.uniform(0.01, 20, len(pts))
    for (x, y), mu in zip(pts, mus):
        assert lyapunov_diag(mu, 1.0, x, y)[1] < 0


def test_straightness():
    ts = np.linspace(0, 10, 501)
    tr = integrate(builtin_linear(0.64), (0.377, 0.233), 10.0, sample_times=ts)
    assert straightness_residual(tr, linear_fixed_point(0.64)) <= 1e-8
    xh = linear_fixed_point(0.64).coords
    still = integrate(builtin_linear(0.64), xh, 5.0, sample_times=np.linspace(0, 5, 11))
    assert straightness_residual(still, xh) == 0.0
    bent = integrate(builtin_nonlinear(1.0, 0.06), (0.377, 0.233), 10.0, sample_times=ts)
    assert straightness_residual(bent, nonlinear_fixed_point(0.06)) > 1e-3


def test_density_ratio():
    ts = np.linspace(0, 10, 501)
    tr = integrate(builtin_linear(0.5), (0.25, 0.25), 10.0, sample_times=ts)
    rho = density_ratio_series(tr)
    assert is_monotone(rho) and rho[-1] > rho[0]
    xh = np.array(linear_fixed_point(0.5).coords)
    ray = integrate(builtin_linear(0.5), tuple(0.8 * xh), 10.0, sample_times=ts)
    assert np.ptp(density_ratio_series(ray)) <= 1e-12
    fig3 = integrate(builtin_linear(0.64), (0.377, 0.233), 10.0, sample_times=ts)
    assert is_monotone(density_ratio_series(fig3), tol=1e-10)
    assert not is_monotone([0.0, 1.0, 0.5])


def test_slope_identity(rng):
    """Along a trajectory dx/dy equals (x - xhat)/(y - yhat)."""
    for table in (builtin_nonlinear(1.0, 0.3), builtin_linear(0.4)):
        x0 = tuple(random_q_points(rng, 1)[0])
        tr = integrate(table, x0, 5.0, sample_times=np.linspace(0, 5, 200))
        for x, y in tr.states:
            r = rates(table, (x, y))
            xh, yh = r.target
            if abs(y - yh) <= 1e-6:
                continue
            f, g = vector_field(table, (x, y))
            assert f / g == pytest.approx((x - xh) / (y - yh), rel=1e-9, abs=1e-12)
