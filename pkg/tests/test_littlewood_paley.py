import numpy as np
import pytest
from scipy import integrate

from boltzcheck import littlewood_paley as lp
from boltzcheck import quadrature as quad
from boltzcheck.functions import gaussian, lift, mixture

F = gaussian(2, center=[0.3, -0.2, 0.1])
V = np.array([[0.4, 0.7], [-1.1, 0.2], [0.0, 0.0]])


def test_bump_support():
    r = np.array([0.0, 0.5, 0.999, 1.0, 1.5])
    b = lp.bump(r)
    assert np.all(b[:3] > 0) and np.all(b[3:] == 0)
    assert b[0] == pytest.approx(np.exp(-1.0))


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("profile", lp.PROFILES)
def test_profile_slice_mass_is_one(n, profile):
    spec = lp.LPSpec(profile=profile)
    m, _ = integrate.quad(lambda r: spec.phi(n, r) * r ** (n - 1), 0, 1, epsabs=0, epsrel=1e-12)
    assert m * lp.sphere_area(n - 1) == pytest.approx(1.0, rel=1e-10)


@pytest.mark.parametrize("n", [2, 3])
def test_cancelling_profile_condition(n):
    # int_0^1 phi'(r) r^(n-2) dr = 0, with phi'(r) = 2 r psi'(r^2)
    def dphi(r):
        return 2 * r * lp.profile_parts(n, "cancelling", r * r)[1]

    val, _ = integrate.quad(lambda r: float(dphi(np.array(r))) * r ** (n - 2), 0, 1, epsabs=1e-13, epsrel=1e-12)
    assert abs(val) < 1e-10
    plain, _ = integrate.quad(lambda r: float(2 * r * lp.profile_parts(n, "plain", r * r)[1]) * r ** (n - 2), 0, 1)
    assert abs(plain) > 1e-3


def test_profile_derivatives_match_finite_differences():
    t = np.array([0.1, 0.4, 0.7])
    h = 1e-6
    for prof in lp.PROFILES:
        p0, p1, p2 = lp.profile_parts(2, prof, t)
        up, dn = lp.profile_parts(2, prof, t + h), lp.profile_parts(2, prof, t - h)
        assert np.allclose(p1, (up[0] - dn[0]) / (2 * h), rtol=1e-6)
        assert np.allclose(p2, (up[1] - dn[1]) / (2 * h), rtol=1e-6)


@pytest.mark.parametrize("profile", lp.PROFILES)
def test_projection_converges_at_rate_four(profile):
    spec = lp.LPSpec(profile=profile)
    errs = [np.abs(lp.project_lifted(j, F, V, spec)[0] - F(V)).max() for j in range(2, 6)]
    rates = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((rates > 3.5) & (rates < 4.5))
    assert errs[-1] < 2e-4


def test_telescoping_sum_recovers_projection():
    spec = lp.LPSpec(j_max=3)
    grid = lp.lp_grid(F, quad.QuadratureSpec(), spec, half_width=2.0)
    total = sum(lp.project_q(j, F, grid, spec) for j in range(4))
    assert np.allclose(total, lp.project_p(3, F, grid, spec), atol=1e-14)


def test_projection_is_linear():
    g = gaussian(2, center=[-0.5, 0.3, 0.0], beta=0.8)
    both = mixture([(1.0, F.centers[0], F.betas[0]), (-2.0, g.centers[0], g.betas[0])])
    for j in (0, 2):
        a = lp.project_lifted(j, F, V)[0]
        b = lp.project_lifted(j, g, V)[0]
        assert np.allclose(lp.project_lifted(j, both, V)[0], a - 2 * b, rtol=1e-12, atol=1e-15)


def _central(fn, x, h):
    eye = np.eye(x.shape[1])
    return np.stack([(fn(x + h * eye[k]) - fn(x - h * eye[k])) / (2 * h) for k in range(x.shape[1])], -1)


@pytest.mark.parametrize("profile", lp.PROFILES)
@pytest.mark.parametrize("j", [1, 3])
def test_analytic_derivatives_match_finite_differences(profile, j):
    spec = lp.LPSpec(profile=profile, radial_nodes=48, angular_nodes=48)
    x = lift(V[:2])
    _, grad, hess = lp.project_at(j, F, x, spec, order=2)
    scale = max(1.0, np.abs(hess).max())
    h = 0.05 * 2.0**-j
    errs, fds = [], []
    for step in (h, h / 2):
        fd = _central(lambda y: lp.project_at(j, F, y, spec, order=1)[1], x, step)
        fds.append(fd)
        errs.append(np.abs(fd - hess).max())
    # the gap shrinks like h^2, and Richardson extrapolation removes it
    assert 3.5 < errs[0] / errs[1] < 4.5
    rich = (4 * fds[1] - fds[0]) / 3
    assert np.abs(rich - hess).max() <= 1e-3 * scale
    fdg = _central(lambda y: lp.project_at(j, F, y, spec)[0], x, h / 2)
    assert np.abs(fdg - grad).max() <= errs[1]


def test_projection_rejects_points_off_the_paraboloid():
    x = lift(V[:1])
    x[:, 2] += 0.6
    with pytest.raises(ValueError):
        lp.project_at(1, F, x)
    with pytest.raises(ValueError):
        lp.project_at(-1, F, lift(V))


def test_envelope_orders():
    parts = lp.project_at(2, F, lift(V), order=2)
    e0, e1, e2 = (lp.envelope(parts, i) for i in range(3))
    assert np.all(e0 <= e1 + 1e-15) and np.all(e1 <= e2 + 1e-15)


def test_square_terms_shapes_and_validation():
    spec = lp.LPSpec(j_max=2, radial_nodes=16, angular_nodes=16)
    q = quad.QuadratureSpec(nodes_per_cell=3)
    terms = lp.square_terms(F, 0, 0.5, 0.0, spec, q)
    assert terms.shape == (3,) and np.all(terms >= 0)
    with pytest.raises(ValueError):
        lp.square_terms(F, 3, 0.5, 0.0, spec, q)
    with pytest.raises(ValueError):
        lp.LPSpec(j_max=0)
    with pytest.raises(ValueError):
        lp.LPSpec(profile="sharp")


def test_order_zero_square_sum_sits_between_l2_bounds():
    # s = 0, i = 0: sum over j of ||Q_j f||^2 lies between ||P_0 f||^2 and 4 ||f||^2
    spec = lp.LPSpec(j_max=3, radial_nodes=16, angular_nodes=16)
    q = quad.QuadratureSpec(nodes_per_cell=3)
    est = lp.square_sum(F, 0, 0.0, 0.0, spec, q)
    grid = lp.lp_grid(F, q, spec)
    l2 = quad.tree_total(grid.weights * F(grid.points) ** 2)
    p0 = quad.tree_total(grid.weights * lp.project_p(0, F, grid, spec) ** 2)
    assert p0 <= est.value <= 4 * l2


def test_grid_distance():
    grid = lp.lp_grid(F, quad.QuadratureSpec(), lp.LPSpec(), half_width=3.0)
    a = F(grid.points)
    assert lp.grid_l2_distance(a, a, grid) == 0.0
    assert lp.grid_l2_distance(a, 0 * a, grid) == pytest.approx(np.sqrt(quad.tree_total(grid.weights * a * a)))
