from math import gamma as gamma_fn
from math import pi

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boltzcheck import quadrature as quad
from boltzcheck.kernel import GeometryError


@pytest.mark.parametrize("n,m", [(2, 8), (2, 24), (3, 8), (3, 24)])
def test_sphere_rule_weights_and_antipodes(n, m):
    d, w = quad.sphere_rule(n, m)
    assert np.allclose(np.linalg.norm(d, axis=-1), 1.0)
    assert w.sum() == pytest.approx(2 * pi if n == 2 else 4 * pi, rel=1e-13)
    # first moments vanish, second moments are |S| / n times the identity
    assert np.allclose(w @ d, 0.0, atol=1e-13)
    assert np.allclose((d * w[:, None]).T @ d, w.sum() / n * np.eye(n), atol=1e-12)


def test_azimuth_rule_measure():
    for n, total in ((2, 2.0), (3, 2 * pi)):
        a, w = quad.azimuth_rule(n, 12)
        assert w.sum() == pytest.approx(total)
        assert np.allclose(w @ a, 0.0, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.9, 3.0), st.integers(0, 7))
def test_jacobi_rule_exact_for_polynomials(alpha, k):
    t, w = quad.jacobi_rule(alpha, 4)
    assert np.sum(w * t**k) == pytest.approx(1.0 / (alpha + k + 1.0), rel=1e-11)


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.9, 2.0), st.floats(0.2, 3.0))
def test_power_rule_integrates_weighted_exponential(alpha, length):
    t, w = quad.power_rule(alpha, length, 5, 6)
    from scipy.special import gammainc

    # int_0^L t^alpha e^-t dt = Gamma(alpha + 1) P(alpha + 1, L)
    exact = gamma_fn(alpha + 1.0) * gammainc(alpha + 1.0, length)
    assert np.sum(w * np.exp(-t)) == pytest.approx(exact, rel=1e-9)


@pytest.mark.parametrize("s", [0.1, 0.25, 0.5, 0.75, 0.9])
def test_theta_rule_on_even_functions(s):
    th, w = quad.theta_rule(s, 4, 5)
    # int_0^(pi/2) t^(-1-2s) t^2 dt
    exact = (pi / 2) ** (2 - 2 * s) / (2 - 2 * s)
    # the inner cell is exact for t^2; the outer Gauss cells see the smooth t^(1-2s)
    assert np.sum(w * th**2) == pytest.approx(exact, rel=1e-7)
    # 1 - cos t is even with a t^2 / 2 start; compare against scipy
    from scipy import integrate

    def smooth(t):
        return 2.0 * (np.sinc(t / (2 * pi)) / 2) ** 2

    # (1 - cos t) / t^2 = 2 sin^2(t/2) / t^2 times the algebraic weight t^(1-2s)
    ref, _ = integrate.quad(smooth, 0, pi / 2, weight="alg", wvar=(1 - 2 * s, 0.0), epsabs=0, epsrel=1e-12)
    assert np.sum(w * (1 - np.cos(th))) == pytest.approx(ref, rel=1e-7)


def test_radial_rule_moments():
    r, w = quad.radial_rule(1.0, 2.0, 3, 4)
    assert np.sum(w * r**2) == pytest.approx(2.0**4 / 4, rel=1e-13)


@pytest.mark.parametrize("n", [2, 3])
def test_gaussian_integral_deterministic(n):
    spec = quad.QuadratureSpec(radius=10.0)
    est = quad.integrate_rn(lambda v: np.exp(-np.sum(v * v, -1)), n, spec)
    assert abs(est.value - pi ** (n / 2)) <= max(est.error, 1e-10)


@pytest.mark.parametrize("scheme", ["sobol", "plain"])
def test_gaussian_integral_monte_carlo(scheme):
    spec = quad.QuadratureSpec(backend="monte-carlo", mc_samples=2**15, mc_scheme=scheme)
    est = quad.integrate_rn(lambda v: np.exp(-0.5 * np.sum(v * v, -1)) * (1 + v[..., 0] ** 2), 3, spec, scale=1.2)
    exact = (2 * pi) ** 1.5 * 2.0
    assert abs(est.value - exact) <= 4 * est.error
    assert est.error > 0


def test_monte_carlo_is_reproducible_across_threads():
    def integrand(v):
        return np.exp(-np.sum(v * v, -1)) * np.cos(v[..., 1])

    out = []
    for threads in (1, 4, 8):
        spec = quad.QuadratureSpec(backend="monte-carlo", mc_samples=40_000, chunk_size=1000, threads=threads)
        out.append(quad.integrate_rn(integrand, 3, spec))
    assert out[0] == out[1] == out[2]
    other = quad.integrate_rn(integrand, 3, quad.QuadratureSpec(backend="monte-carlo", mc_samples=40_000, seed=7))
    assert other.value != out[0].value


def test_streams_are_keyed():
    a = quad.stream(1, 2, 3).random(4)
    assert np.array_equal(a, quad.stream(1, 2, 3).random(4))
    assert not np.array_equal(a, quad.stream(1, 2, 4).random(4))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=0, max_size=300))
def test_tree_total_is_a_sum(values):
    tot = quad.tree_total(values, block=16)
    assert tot == pytest.approx(float(np.sum(values)), abs=1e-6 * (1 + np.sum(np.abs(values))))


def test_tree_total_is_order_fixed():
    x = np.random.default_rng(0).standard_normal(10_000)
    assert quad.tree_total(x) == quad.tree_total(x.copy())


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 5), st.data())
def test_orthonormal_frame(n, data):
    k = np.array(data.draw(st.lists(st.floats(-1, 1), min_size=n, max_size=n)))
    if np.linalg.norm(k) < 1e-3:
        return
    k /= np.linalg.norm(k)
    fr = quad.orthonormal_frame(k)
    full = np.vstack([k, fr])
    assert np.allclose(full @ full.T, np.eye(n), atol=1e-12)


def test_sphere_integral_of_polynomial():
    spec = quad.QuadratureSpec()
    est = quad.integrate_sphere(lambda d: d[..., 2] ** 2, 3, spec)
    assert est.value == pytest.approx(4 * pi / 3, rel=1e-12)


def test_plane_and_coplane_integrals():
    spec = quad.QuadratureSpec(radius=9.0)
    p, nrm = np.array([1.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0])
    est = quad.integrate_plane(p, nrm, lambda x: np.exp(-np.sum(x * x, -1)), spec)
    assert abs(est.value - pi * np.exp(-1.0)) <= est.error
    # line {x_1 = 1, x_2 = 0.5}: int e^-(1 + 0.25 + t^2) dt
    est = quad.integrate_coplane(p, nrm, np.array([0.0, 0.5, 0.0]), np.array([0.0, 1.0, 0.0]),
                                 lambda x: np.exp(-np.sum(x * x, -1)), spec)
    assert abs(est.value - np.sqrt(pi) * np.exp(-1.25)) <= est.error
    with pytest.raises(GeometryError):
        quad.integrate_coplane(p, nrm, p, 2 * nrm, lambda x: x[..., 0], spec)
    with pytest.raises(GeometryError):
        quad.integrate_plane(p, np.zeros(3), lambda x: x[..., 0], spec)


def test_coplane_point_and_gram():
    x = quad.coplane_point(np.array([1.0, 2, 3]), np.array([1.0, 0, 1]), np.array([0.0, 1, 0]), np.array([0.0, 1, 1]))
    assert x @ np.array([1.0, 0, 1]) == pytest.approx(4.0)
    assert x @ np.array([0.0, 1, 1]) == pytest.approx(1.0)
    assert quad.gram_determinant(np.array([1.0, 0, 0]), np.array([1.0, 1, 0])) == pytest.approx(1.0)


def test_refinement_steps():
    base = quad.QuadratureSpec()
    fine = base.refined()
    assert fine.nodes_per_cell == base.nodes_per_cell + 1
    assert fine.angular_nodes == 32
    assert fine.theta_min == base.theta_min / 2
    assert fine.mc_samples == 2 * base.mc_samples
    assert base.refined(2) == fine.refined()
    coarse = base.coarsened()
    assert coarse.nodes_per_cell == base.nodes_per_cell - 1 and coarse.angular_nodes < base.angular_nodes


@pytest.mark.parametrize("bad", [dict(backend="gpu"), dict(mc_scheme="halton"), dict(mc_replicates=1),
                                 dict(theta_min=0.0), dict(angular_nodes=7), dict(nodes_per_cell=1)])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        quad.QuadratureSpec(**bad)
