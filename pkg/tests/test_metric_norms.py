from math import pi, sqrt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boltzcheck import metric_norms as mn
from boltzcheck import quadrature as quad
from boltzcheck.functions import bracket, gaussian, maxwellian, mixture

SPEC = quad.QuadratureSpec()
pt = st.lists(st.floats(-4, 4), min_size=3, max_size=3).map(np.array)


def test_distance_examples():
    assert mn.aniso_dist(np.zeros(3), np.zeros(3)) == 0.0
    assert mn.aniso_dist(np.array([1.0, 0, 0]), np.zeros(3)) == pytest.approx(sqrt(5) / 2, rel=1e-15)
    v = np.array([0.6, 0, 0])
    # sqrt(0.36 + 0.18^2) and sqrt(0.09 + 0.135^2)
    assert mn.aniso_dist(v, np.zeros(3)) == pytest.approx(sqrt(0.3924), rel=1e-14)
    assert mn.aniso_dist(v, v / 2) == pytest.approx(sqrt(0.108225), rel=1e-14)
    assert mn.aniso_dist(v, v / 2) == pytest.approx(0.328976, abs=5e-7)


@settings(max_examples=300, deadline=None)
@given(pt, pt, pt)
def test_metric_axioms(a, b, c):
    dab, dbc, dac = mn.aniso_dist(a, b), mn.aniso_dist(b, c), mn.aniso_dist(a, c)
    assert dab == pytest.approx(float(mn.aniso_dist(b, a)), rel=1e-14, abs=1e-15)
    assert dac <= dab + dbc + 1e-12 * (1 + dab + dbc)
    assert dab >= np.linalg.norm(a - b) - 1e-12


@settings(max_examples=300, deadline=None)
@given(pt, pt)
def test_lifted_euclidean_distance(a, b):
    la = np.r_[a, 0.5 * a @ a]
    lb = np.r_[b, 0.5 * b @ b]
    assert mn.aniso_dist(a, b) == pytest.approx(float(np.linalg.norm(la - lb)), rel=1e-12, abs=1e-14)


@settings(max_examples=300, deadline=None)
@given(pt, st.lists(st.floats(-1, 1), min_size=3, max_size=3).map(np.array))
def test_midpoint_contraction(v, step):
    vp = v + step
    d = mn.aniso_dist(v, vp)
    if 0 < d <= 1:
        assert mn.aniso_dist(v, 0.5 * (v + vp)) <= 0.75 * d


def test_rho_max_solves_cutoff():
    rng = np.random.default_rng(1)
    v = rng.standard_normal((50, 3))
    om = rng.standard_normal((50, 3))
    om /= np.linalg.norm(om, axis=-1, keepdims=True)
    r = mn.rho_max_aniso(v, om)
    assert np.allclose(mn.aniso_dist(v, v + r[:, None] * om), 1.0, atol=1e-12)


def test_weighted_lp_gaussian():
    f = gaussian(3, beta=[0.5, 0.5, 0.5, 0.0])
    est = mn.weighted_lp(f, mn.WeightedNormSpec(2.0, 0.0), SPEC)
    assert est.value == pytest.approx(pi**0.75, rel=1e-8)
    l1 = mn.weighted_lp(maxwellian(n=2), mn.WeightedNormSpec(1.0, 0.0), SPEC)
    assert l1.value == pytest.approx(1.0, rel=1e-8)


def test_weighted_lp_homogeneity_and_zero():
    f = gaussian(2, center=[0.4, 0.0, 0.2])
    for p, ell in ((1.0, 0.0), (2.0, -1.0), (3.0, 1.5)):
        s = mn.WeightedNormSpec(p, ell)
        a = mn.weighted_lp(f, s, SPEC).value
        b = mn.weighted_lp(f * -2.0, s, SPEC).value
        assert b == pytest.approx(2.0 * a, rel=1e-12)
    assert mn.weighted_lp(f * 0.0, mn.WeightedNormSpec(), SPEC).value == 0.0
    with pytest.raises(ValueError):
        mn.WeightedNormSpec(0.5)


def test_seminorm_homogeneity_and_vanishing_difference():
    sn = mn.SeminormSpec(0.5, -1.0)
    f = gaussian(2, center=[0.3, -0.2, 0.0])
    a = mn.seminorm_dot_n(f, sn, SPEC).value
    assert a > 0
    assert mn.seminorm_dot_n(f * -3.0, sn, SPEC).value == pytest.approx(3 * a, rel=1e-12)
    assert mn.seminorm_dot_n_sq(f + (-f), sn, SPEC).value < 1e-25


def test_norm_parts_add_up():
    sn = mn.SeminormSpec(0.25, 0.0)
    f = mixture([(1.0, [0.0, 0.0, 0.0], 0.5), (0.5, [1.0, 0.0, 0.0], 1.0)])
    parts = mn.norm_n_full(f, sn, SPEC)
    assert parts.total.value**2 == pytest.approx(parts.lebesgue_sq.value + parts.seminorm_sq.value, rel=1e-12)
    assert parts.total.value >= sqrt(parts.lebesgue_sq.value)
    lp = mn.weighted_lp(f, mn.WeightedNormSpec(2.0, sn.gamma + 2 * sn.s), SPEC).value
    assert parts.lebesgue_sq.value == pytest.approx(lp**2, rel=1e-12)
    zero = mn.norm_n_full(f * 0.0, sn, SPEC)
    assert zero.total.value == 0.0


def test_iso_sobolev_basic():
    f = gaussian(2)
    a = mn.iso_sobolev(f, 0.5, 0.0, SPEC).value
    assert mn.iso_sobolev(f * 2.0, 0.5, 0.0, SPEC).value == pytest.approx(2 * a, rel=1e-12)
    assert a > mn.weighted_lp(f, mn.WeightedNormSpec(2.0, 0.0), SPEC).value
    assert mn.iso_sobolev(f * 0.0, 0.5, 0.0, SPEC).value == 0.0
    with pytest.raises(ValueError):
        mn.iso_sobolev(f, 1.0, 0.0, SPEC)


def _seminorm_mc(f, s, gamma, samples, seed=11, chunk=10**6):
    """Independent importance-sampled estimate of the dotted semi-norm in n = 2.

    v ~ N(0, 1.5^2 I); v' = v + rho omega with omega uniform on the circle and
    rho of density (2 - 2s) rho^(1-2s) on [0, 1], which contains {d <= 1}.
    """
    rng = np.random.default_rng(seed)
    e = 0.5 * (gamma + 2 * s + 1)
    sc = 1.5
    tot, sq, cnt = 0.0, 0.0, 0
    while cnt < samples:
        m = min(chunk, samples - cnt)
        v = sc * rng.standard_normal((m, 2))
        qv = np.exp(-0.5 * np.sum(v * v, -1) / sc**2) / (2 * pi * sc**2)
        ph = 2 * pi * rng.random(m)
        rho = rng.random(m) ** (1 / (2 - 2 * s))
        vp = v + rho[:, None] * np.stack([np.cos(ph), np.sin(ph)], -1)
        d = mn.aniso_dist(v, vp)
        w = (bracket(v) * bracket(vp)) ** e * (f(vp) - f(v)) ** 2 / d ** (2 + 2 * s) * rho
        x = np.where(d <= 1, w * 2 * pi / ((2 - 2 * s) * rho ** (1 - 2 * s)) / qv, 0.0)
        tot += x.sum()
        sq += (x * x).sum()
        cnt += m
    mean = tot / cnt
    return mean, sqrt(max(sq / cnt - mean**2, 0.0) / (cnt - 1))


def test_seminorm_against_monte_carlo_oracle():
    f = gaussian(2, beta=[0.5, 0.5, 0.0])
    det = mn.seminorm_dot_n_sq(f, mn.SeminormSpec(0.25, 0.0), SPEC)
    mean, se = _seminorm_mc(f, 0.25, 0.0, 10**7)
    assert abs(det.value - mean) <= 3 * np.hypot(se, det.error)
