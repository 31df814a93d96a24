import numpy as np
import pytest

from boltzcheck import quadrature as quad
from boltzcheck import weakform as wf
from boltzcheck.functions import BallIndicator, Pointwise, gaussian, maxwellian, mixture
from boltzcheck.kernel import KernelParams

SPEC = quad.QuadratureSpec()
P = KernelParams(2, -1.0, 0.5)
F0 = gaussian(2, center=[0.3, 0.1, 0.0])
H0 = gaussian(2, center=[-0.2, 0.4, 0.0], beta=0.7)
MU = maxwellian(n=2)


def within(a, b, tol=1.0, floor=1e-4):
    e = np.hypot(a.error, b.error)
    return abs(a.value - b.value) <= max(tol * e, floor * max(abs(a.value), abs(b.value)))


def test_constant_test_function_is_annihilated():
    one = Pointwise(lambda v: np.full(v.shape[:-1], 3.0), 2, decays=False)
    est = wf.trilinear_sigma(MU, F0, one, P, SPEC)
    assert est.value == 0.0


def test_trilinear_table_is_linear_in_h():
    hs = [H0, F0, H0 + F0 * 2.0]
    val, err = wf.trilinear_table(MU, [F0], hs, P, SPEC)
    assert val[0, 2] == pytest.approx(val[0, 0] + 2 * val[0, 1], rel=1e-10, abs=1e-13)
    single = wf.trilinear_sigma(MU, F0, H0, P, SPEC)
    assert single.value == pytest.approx(val[0, 0], rel=1e-10)


def test_n_g_is_nonnegative():
    fs = [F0, H0, mixture([(1.0, [0.4, 0.0, 0.0], 0.9), (-1.0, [-0.4, 0.0, 0.0], 0.9)])]
    val, err = wf.n_g_table(fs, BallIndicator(2), KernelParams(2, 0.0, 0.25), SPEC)
    assert np.all(val > 0)
    assert np.all(err < val)


def test_pairing_splits_into_k_minus_n():
    # <Q(g, f), f> = K_g(f) - N_g(f)
    pair = wf.self_pairing_table(MU, [F0], P, SPEC)
    pair = quad.Estimate(float(pair[0][0]), float(pair[1][0]))
    k, n = wf.k_g(F0, MU, P, SPEC), wf.n_g(F0, MU, P, SPEC)
    diff = quad.Estimate(k.value - n.value, float(np.hypot(k.error, n.error)))
    assert within(pair, diff)


def test_k_g_direct_matches_cancellation_formula():
    direct = wf.k_g(F0, MU, P, SPEC)
    oracle = wf.k_g_oracle(F0, MU, P, SPEC)
    assert abs(direct.value - oracle.value) <= 0.01 * abs(oracle.value)
    assert within(direct, oracle)


def test_kinetic_pairing_is_symmetric():
    a = wf.kinetic_pairing(F0, MU, P, SPEC, b=H0)
    b = wf.kinetic_pairing(H0, MU, P, SPEC, b=F0)
    assert a.value == pytest.approx(b.value, rel=1e-12)


def test_gain_loss_form_matches_difference_form():
    assert within(wf.trilinear_gain_loss(MU, F0, H0, P, SPEC), wf.trilinear_sigma(MU, F0, H0, P, SPEC))


def test_dual_decomposition_matches_sigma_form():
    assert within(wf.trilinear_dual(MU, F0, H0, P, SPEC), wf.trilinear_sigma(MU, F0, H0, P, SPEC))


def test_o_star_matches_closed_form():
    a, b = wf.o_star(F0, H0, MU, P, SPEC), wf.o_star_oracle(F0, H0, MU, P, SPEC)
    assert within(a, b)
    assert a.value > 0


def test_collision_invariants_symmetrized():
    for phi in (Pointwise(lambda v: v[..., 0], 2, decays=False),
                Pointwise(lambda v: np.sum(v * v, -1), 2, decays=False)):
        e = wf.collision_moment(F0, phi, P, SPEC, symmetrized=True)
        assert abs(e.value) < 1e-12


def test_dyadic_piece_argument_checks():
    with pytest.raises(ValueError):
        wf.dyadic_piece("other", 0, MU, F0, H0, P, SPEC)
    with pytest.raises(ValueError):
        wf.dyadic_piece("minus", 0, MU, F0, H0, P, SPEC, picture="carleman")
    with pytest.raises(ValueError):
        wf.dyadic_piece("star", 0, MU, F0, H0, P, SPEC, picture="sigma")


def test_dyadic_minus_piece_is_positive_for_positive_data():
    est = wf.dyadic_piece("minus", 2, MU, F0, H0, P, SPEC)
    assert est.value > 0


def test_coercivity_profile_needs_bounded_support():
    with pytest.raises(ValueError):
        wf.coercivity_profile(MU, F0, P, SPEC)


def test_gram_determinant():
    u, ub = np.array([1.0, 2.0, 0.0]), np.array([0.0, 1.0, 1.0])
    assert wf.gram_det(u, ub) == pytest.approx(np.linalg.norm(np.cross(u, ub)) ** 2)
    assert wf.gram_det(u, 2 * u) == pytest.approx(0.0, abs=1e-12)


def test_coplane_check_small_sample():
    spec = quad.QuadratureSpec(backend="monte-carlo", seed=5)

    def H(v, vp, vbp):
        return np.exp(-0.5 * (np.sum(v * v, -1) + np.sum(vp * vp, -1) + np.sum(vbp * vbp, -1)))

    chk = wf.coplane_identity_check(H, [0.5, 0.0, 0.0], [0.0, -0.5, 0.3], spec, samples=200_000)
    assert chk.gap < 3.0
    # the raw right side is smaller by 2^(2(n-1)) = 16
    assert chk.rhs.value == pytest.approx(16 * chk.rhs_as_displayed)
    with pytest.raises(NotImplementedError):
        wf.coplane_identity_check(H, [0.5, 0.0], [0.0, -0.5], spec, samples=1000)


def test_monte_carlo_streams_do_not_depend_on_object_identity():
    spec = quad.QuadratureSpec(backend="monte-carlo", mc_samples=2048, chunk_size=512)

    def phi():
        return Pointwise(lambda v: np.sum(v * v, -1), 2, name="energy", decays=False)

    a = wf.collision_moment(F0, phi(), P, spec)
    b = wf.collision_moment(F0, phi(), P, spec)
    assert a == b
