from math import asin, pi, sqrt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boltzcheck import functions as F
from boltzcheck import quadrature as quad
from boltzcheck.kernel import KernelParams, ParameterError

SPEC = quad.QuadratureSpec()


def test_lift_and_bracket():
    v = np.array([[1.0, 2.0], [0.0, 0.0]])
    assert np.allclose(F.lift(v), [[1.0, 2.0, 2.5], [0.0, 0.0, 0.0]])
    assert np.allclose(F.bracket(v), [sqrt(6.0), 1.0])


def test_mixture_derivatives_match_finite_differences():
    f = F.mixture([(1.0, [0.3, -0.2, 0.1, 0.4], [0.5, 0.7, 0.3, 1.1]), (-0.6, [0.0, 0.5, 0.0, 0.0], 0.9)])
    x = np.array([[0.2, 0.1, -0.3, 0.5], [1.0, -0.5, 0.2, 0.1]])
    h = 1e-5
    eye = np.eye(4)
    fd = np.stack([(f.lifted(x + h * eye[k]) - f.lifted(x - h * eye[k])) / (2 * h) for k in range(4)], -1)
    assert np.allclose(f.gradient(x), fd, atol=1e-9)
    fd2 = np.stack([(f.gradient(x + h * eye[k]) - f.gradient(x - h * eye[k])) / (2 * h) for k in range(4)], -1)
    assert np.allclose(f.hessian(x), fd2, atol=1e-8)


def test_mixture_restriction_is_lifted_evaluation():
    f = F.gaussian(2, center=[0.5, 0.0, 0.3], beta=[0.4, 0.6, 0.8])
    v = np.array([[0.1, 0.2], [1.0, -1.0]])
    c = np.array([0.5, 0.0, 0.3])
    expected = np.exp(-np.sum(np.array([0.4, 0.6, 0.8]) * (F.lift(v) - c) ** 2, axis=-1))
    assert np.allclose(f(v), expected, rtol=1e-14)


def test_mixture_algebra():
    f = F.gaussian(2)
    g = F.gaussian(2, center=[1.0, 0, 0])
    v = np.array([[0.3, -0.4]])
    assert np.allclose((f + g)(v), f(v) + g(v))
    assert np.allclose((f * 2.5)(v), 2.5 * f(v))
    assert np.allclose((-f)(v), -f(v))


@pytest.mark.parametrize("n", [2, 3])
def test_maxwellian_mass_and_moments(n):
    mu = F.maxwellian(F.MaxwellianParams(2.0, tuple([0.5] + [0.0] * (n - 1)), 1.5))
    spec = quad.QuadratureSpec(radius=12.0)
    mass = quad.integrate_rn(mu, n, spec, center=np.r_[0.5, np.zeros(n - 1)])
    assert abs(mass.value - 2.0) <= max(mass.error, 1e-7)
    mom = quad.integrate_rn(lambda v: v[..., 0] * mu(v), n, spec, center=np.r_[0.5, np.zeros(n - 1)])
    assert abs(mom.value - 1.0) <= max(mom.error, 1e-7)
    with pytest.raises(ParameterError):
        F.maxwellian(F.MaxwellianParams(0.0, (0.0,) * n, 1.0))


def test_ball_and_truncation():
    b = F.BallIndicator(2, radius=1.5, height=2.0)
    assert np.allclose(b(np.array([[0.0, 1.5], [1.1, 1.1]])), [2.0, 0.0])
    t = F.Truncated(F.maxwellian(n=2), 1.0)
    v = np.array([[0.5, 0.5], [1.0, 0.5]])
    assert np.allclose(t(v), [F.maxwellian(n=2)(v[:1])[0], 0.0])
    assert t.reach == 1.0


@pytest.mark.parametrize("n,center", [(2, [0.2, 0.3]), (2, [3.0, 1.0]), (2, [0.0, 0.0]),
                                      (3, [0.1, 0.2, -0.3]), (3, [0.0, 4.0, 0.0]), (3, [1.0, 0.0, 0.0])])
def test_ray_rule_reproduces_ball_volume(n, center):
    pts, w = F.ray_ball_rule(np.array(center, dtype=float), 1.0, n, 0.0, SPEC)
    vol = pi if n == 2 else 4 * pi / 3
    assert w.sum() == pytest.approx(vol, rel=1e-6)
    assert np.all(np.linalg.norm(pts, axis=-1) <= 1.0 + 1e-12)


# Newtonian potential of the uniform unit ball in R^3: 2 pi (1 - r^2 / 3) inside, (4 pi / 3) / r outside.
@pytest.mark.parametrize("r", [0.0, 0.4, 0.9, 1.0, 1.7, 5.0])
def test_ray_rule_newtonian_potential(r):
    v = np.array([0.0, r, 0.0])
    _, w = F.ray_ball_rule(v, 1.0, 3, -1.0, SPEC)
    exact = 2 * pi * (1 - r * r / 3) if r <= 1 else 4 * pi / (3 * r)
    assert w.sum() == pytest.approx(exact, rel=1e-5)


def test_assumption_u_constant_is_resolution_stable():
    p = KernelParams(2, -1.0, 0.25)
    g = F.BallIndicator(2, 1.0)
    c0 = F.assumption_u_constant(g, p, SPEC)
    c1 = F.assumption_u_constant(g, p, SPEC.refined())
    assert np.isfinite(c0) and c0 > 0
    assert abs(c0 - c1) / c1 < 0.02


def test_assumption_u_constant_hard_potential_gaussian():
    # for gamma = 0, the a = gamma endpoint gives int <v_*>^i g_* exactly at every v
    p = KernelParams(2, 0.0, 0.25)
    mu = F.maxwellian(n=2)
    c = F.assumption_u_constant(mu, p, SPEC)
    spec = quad.QuadratureSpec(radius=12.0)
    first = quad.integrate_rn(lambda v: F.bracket(v) * mu(v), 2, spec).value
    assert c >= first * (1 - 1e-6)


@pytest.mark.parametrize("delta", [0.1, 0.25, 0.5])
def test_tube_mass_of_unit_disk(delta):
    # the worst strip is centered: pi minus the area of {|x_2| < delta} inside the unit disk
    exact = pi - 2 * (delta * sqrt(1 - delta**2) + asin(delta))
    val, info = F.tube_mass_inf(F.BallIndicator(2, 1.0), 1.0, delta, SPEC, details=True)
    assert info["total"] == pytest.approx(pi, rel=1e-6)
    assert val == pytest.approx(exact, rel=2e-3)


def test_tube_mass_decreases_with_width():
    g = F.Truncated(F.maxwellian(n=2), 1.0)
    vals = [F.tube_mass_inf(g, 1.0, d, SPEC) for d in (0.1, 0.2, 0.4)]
    assert vals[0] > vals[1] > vals[2] > 0
    with pytest.raises(ParameterError):
        F.tube_mass_inf(g, 1.0, 1.5, SPEC)


def test_assumption_constants_bundle():
    p = KernelParams(2, -1.0, 0.25)
    c = F.assumption_constants(F.BallIndicator(2), p, 1.0, 0.25, SPEC)
    assert c.i_exponent == 1 and c.c_g_upper > 0 and 0 < c.c_g_lower < pi
    with pytest.raises(ParameterError):
        F.assumption_constants(F.BallIndicator(2), p, 0.2, 0.25, SPEC)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_second_order_defect_is_quadratic(t, u, a, b):
    f = F.gaussian(2, center=[0.2, -0.1, 0.3])
    v = np.array([a, b])
    step = np.array([t, -u]) * 1e-2
    d1 = F.second_order_defect(f, v, v + step)
    d2 = F.second_order_defect(f, v, v + 0.5 * step)
    # halving the step divides a second-order remainder by about four
    if abs(d1) > 1e-13:
        assert 2.5 < abs(d1 / d2) < 6.0 or abs(d1) < 1e-10
