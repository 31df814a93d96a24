"""Weak-form collision functionals.

Every functional is an integral over (v, v_*, sigma) or over Carleman
planes and is evaluated with ``collision_rules``.  Values come back as
``Estimate(value, error)``: one standard error for the Monte Carlo backend,
the gap to the next-coarser rule for the deterministic one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import pi

import numpy as np

from . import collision_rules as cr
from . import quadrature as quad
from .functions import TestFunction
from .kernel import GeometryError, KernelParams, c_prime, chi, sphere_area
from .quadrature import Estimate

reach_of = cr.reach_of


def _scalar(val, err) -> Estimate:
    return Estimate(float(np.ravel(val)[0]), float(np.ravel(err)[0]))


def _inner_sum(w, vals):
    return np.einsum("ci,ci->c", w, vals)


def _tag(*parts) -> int:
    # stable small integer per functional so Monte Carlo streams differ between functionals
    # objects enter by type and name only: a default repr carries a memory address
    h = 0
    for p in parts:
        if not isinstance(p, (str, int, float)):
            p = f"{type(p).__name__}:{getattr(p, 'name', '')}"
        for ch in str(p):
            h = (h * 131 + ord(ch)) % 1_000_003
    return h


# --- trilinear form ----------------------------------------------------------------------

def trilinear_sigma(g: TestFunction, f: TestFunction, h: TestFunction, params: KernelParams,
                    spec: quad.QuadratureSpec) -> Estimate:
    """<Q(g, f), h> = int int int B g_* f (h' - h)."""
    def integrand(b):
        hv = b.ev(h, "v")
        return b.ev(g, "v_star") * b.ev(f, "v") * _inner_sum(b.w_in, b.ev(h, "vp") - hv[:, None])

    return _scalar(*cr.estimate(params, g, spec, integrand, reach_of(f), tag=_tag("tri", h)))


def trilinear_table(g: TestFunction, fs, hs, params: KernelParams, spec: quad.QuadratureSpec):
    """Matrix of <Q(g, f_a), h_b> on shared nodes; returns (values, errors), each (len(fs), len(hs))."""
    fs, hs = list(fs), list(hs)

    def integrand(b):
        gs = b.ev(g, "v_star")
        gh = np.stack([_inner_sum(b.w_in, b.ev(h, "vp") - b.ev(h, "v")[:, None]) for h in hs], axis=1)
        fv = np.stack([b.ev(f, "v") for f in fs], axis=1)
        return (gs[:, None, None] * fv[:, :, None] * gh[:, None, :]).reshape(len(gs), -1)

    val, err = cr.estimate(params, g, spec, integrand, reach_of(*fs), tag=_tag("table"))
    return val.reshape(len(fs), len(hs)), err.reshape(len(fs), len(hs))


def self_pairing_table(g: TestFunction, fs, params: KernelParams, spec: quad.QuadratureSpec):
    """<Q(g, f), f> for several f on shared nodes: (values, errors)."""
    fs = list(fs)

    def integrand(b):
        gs = b.ev(g, "v_star")
        return np.stack([gs * b.ev(f, "v") * _inner_sum(b.w_in, b.ev(f, "vp") - b.ev(f, "v")[:, None])
                         for f in fs], axis=1)

    return cr.estimate(params, g, spec, integrand, reach_of(*fs), tag=_tag("self"))


def trilinear_gain_loss(g: TestFunction, f: TestFunction, h: TestFunction, params: KernelParams,
                        spec: quad.QuadratureSpec, star_radius: float | None = None) -> Estimate:
    """<Q(g, f), h> = int int int B (g'_* f' - g_* f) h, pre-post swap not applied.

    v'_* leaves the support of g, so the v_* domain is widened to cover both.
    """
    r = star_radius if star_radius is not None else reach_of(g) + reach_of(f)

    def integrand(b):
        loss = b.ev(g, "v_star") * b.ev(f, "v")
        gain = b.ev(g, "vsp") * b.ev(f, "vp")
        return b.ev(h, "v") * _inner_sum(b.w_in, gain - loss[:, None])

    return _scalar(*cr.estimate(params, g, spec, integrand, reach_of(f, g), star_radius=r,
                                tag=_tag("gainloss")))


def collision_moment(f: TestFunction, phi: TestFunction, params: KernelParams, spec: quad.QuadratureSpec,
                     symmetrized: bool = False) -> Estimate:
    """<Q(f, f), phi>.

    The plain form integrates f_* f (phi' - phi); the symmetrized form uses
    (1/4)(phi' + phi'_* - phi - phi_*), which vanishes pointwise for
    collision invariants.
    """
    if not symmetrized:
        return trilinear_sigma(f, f, phi, params, spec)

    def integrand(b):
        d = b.ev(phi, "vp") + b.ev(phi, "vsp") - b.ev(phi, "v")[:, None] - b.ev(phi, "v_star")[:, None]
        return 0.25 * b.ev(f, "v_star") * b.ev(f, "v") * _inner_sum(b.w_in, d)

    return _scalar(*cr.estimate(params, f, spec, integrand, reach_of(f), tag=_tag("sym", phi)))


# --- N_g / K_g -----------------------------------------------------------------------------

def n_g_table(fs, g: TestFunction, params: KernelParams, spec: quad.QuadratureSpec):
    """N_g(f) = (1/2) int int int B g_* (f' - f)^2 for several f on shared nodes."""
    fs = list(fs)

    def integrand(b):
        gs = 0.5 * b.ev(g, "v_star")
        return np.stack([gs * _inner_sum(b.w_in, (b.ev(f, "vp") - b.ev(f, "v")[:, None]) ** 2) for f in fs], axis=1)

    return cr.estimate(params, g, spec, integrand, reach_of(*fs), tag=_tag("ng"))


def n_g(f: TestFunction, g: TestFunction, params: KernelParams, spec: quad.QuadratureSpec) -> Estimate:
    return _scalar(*n_g_table([f], g, params, spec))


def k_g(f: TestFunction, g: TestFunction, params: KernelParams, spec: quad.QuadratureSpec) -> Estimate:
    """K_g(f) = (1/2) int int int B g_* ((f')^2 - f^2), integrated directly."""
    def integrand(b):
        fv = b.ev(f, "v")
        return 0.5 * b.ev(g, "v_star") * _inner_sum(b.w_in, b.ev(f, "vp") ** 2 - fv[:, None] ** 2)

    return _scalar(*cr.estimate(params, g, spec, integrand, reach_of(f), tag=_tag("kg")))


def kinetic_pairing(a: TestFunction, g: TestFunction, params: KernelParams, spec: quad.QuadratureSpec,
                    b: TestFunction | None = None) -> Estimate:
    """int int a(v) b(v) g(v_*) Phi(|v - v_*|) dv dv_*  (b defaults to a)."""
    b = a if b is None else b
    val, err = cr.outer_integral(params, g, spec, lambda vs, v: g(vs) * a(v) * b(v), reach_of(a, b),
                                 tag=_tag("pair"))
    return _scalar(val, err)


def k_g_oracle(f: TestFunction, g: TestFunction, params: KernelParams, spec: quad.QuadratureSpec) -> Estimate:
    """Cancellation-lemma route: C' int f^2 (int g_* |v - v_*|^gamma dv_*) dv / C_Phi."""
    c = c_prime(params) / params.c_phi
    e = kinetic_pairing(f, g, params, spec)
    return Estimate(c * e.value, c * e.error)


# --- dyadic pieces -----------------------------------------------------------------------

def dyadic_piece(which: str, k: int, g: TestFunction, f: TestFunction, h: TestFunction, params: KernelParams,
                 spec: quad.QuadratureSpec, picture: str | None = None) -> Estimate:
    """D^k_plus, D^k_minus (sigma picture) and D^k_star (Carleman picture).

    ``picture='carleman'`` evaluates D^k_plus through the plane representation
    instead, for the duality check.
    """
    if which not in ("plus", "minus", "star"):
        raise ValueError("which must be plus, minus or star")
    picture = picture or ("carleman" if which == "star" else "sigma")
    if which == "minus" and picture != "sigma":
        raise ValueError("D^k_minus is defined in the sigma picture")
    if which == "star" and picture != "carleman":
        raise ValueError("D^k_star is defined in the Carleman picture")
    tag = _tag("piece", which, picture, k)
    if picture == "sigma":
        if which == "plus":
            def integrand(b):
                return b.ev(g, "v_star") * b.ev(f, "v") * _inner_sum(b.w_in, b.ev(h, "vp"))
        else:
            def integrand(b):
                return b.ev(g, "v_star") * b.ev(f, "v") * b.ev(h, "v") * b.w_in.sum(axis=1)
    else:
        if which == "plus":
            def integrand(b):
                return b.ev(g, "v_star") * b.ev(h, "v_prime") * _inner_sum(b.w_in, b.ev(f, "v"))
        else:
            def integrand(b):
                return b.ev(g, "v_star") * b.ev(h, "v_prime") * b.ev(f, "v_prime") * b.w_in.sum(axis=1)
    val, err = cr.estimate(params, g, spec, integrand, reach_of(f, h), picture=picture, inner="piece", k=k, tag=tag)
    return _scalar(val, err)


def dyadic_differences(g, f, h, params, spec, ks):
    """Per k: D+ - D- (one sigma integrand) and D+ - D* (one Carleman integrand), with errors."""
    out = []
    for k in ks:
        def sig(b):
            return b.ev(g, "v_star") * b.ev(f, "v") * _inner_sum(b.w_in, b.ev(h, "vp") - b.ev(h, "v")[:, None])

        def car(b):
            return b.ev(g, "v_star") * b.ev(h, "v_prime") * _inner_sum(b.w_in, b.ev(f, "v") - b.ev(f, "v_prime")[:, None])

        a = _scalar(*cr.estimate(params, g, spec, sig, reach_of(f, h), inner="piece", k=k, tag=_tag("dpm", k)))
        c = _scalar(*cr.estimate(params, g, spec, car, reach_of(f, h), picture="carleman", inner="piece", k=k,
                                 tag=_tag("dps", k)))
        out.append((k, a, c))
    return out


def dual_sum(g: TestFunction, f: TestFunction, h: TestFunction, params: KernelParams,
             spec: quad.QuadratureSpec) -> Estimate:
    """sum_k (D^k_+ - D^k_*) = int dv' int dv_* int_E B~ g_* h' (f - f'), all scales at once."""
    def integrand(b):
        fp = b.ev(f, "v_prime")
        return b.ev(g, "v_star") * b.ev(h, "v_prime") * _inner_sum(b.w_in, b.ev(f, "v") - fp[:, None])

    return _scalar(*cr.estimate(params, g, spec, integrand, reach_of(f, h), picture="carleman", tag=_tag("dual")))


def o_star(f: TestFunction, h: TestFunction, g: TestFunction, params: KernelParams,
           spec: quad.QuadratureSpec) -> Estimate:
    """O_*(f, h) = int f' h' int g_* int_E B~ (1 - A), A = (|v'-v_*|^2 / (|v-v'|^2 + |v'-v_*|^2))^((n+gamma)/2).

    A is the on-plane form of Phi(v'-v_*)|v'-v_*|^n / (Phi(v-v_*)|v-v_*|^n).
    With the bracket oriented as 1 - A the remainder closes the dual
    decomposition <Q(g,f),h> = sum_k (D^k_+ - D^k_*) + O_*.
    """
    m = 0.5 * (params.n + params.gamma)

    def integrand(b):
        y2 = np.sum((b.v_prime - b.v_star) ** 2, axis=-1)[:, None]
        w2 = np.sum((b.v - b.v_prime[:, None, :]) ** 2, axis=-1)
        a = (y2 / (w2 + y2)) ** m
        return b.ev(g, "v_star") * b.ev(f, "v_prime") * b.ev(h, "v_prime") * _inner_sum(b.w_in, 1.0 - a)

    return _scalar(*cr.estimate(params, g, spec, integrand, reach_of(f, h), picture="carleman", tag=_tag("ostar")))


def o_star_oracle(f, h, g, params, spec) -> Estimate:
    """O_* after the plane integral is done in closed form: 2 C' int int f h g_* |v - v_*|^gamma / C_Phi."""
    c = 2.0 * c_prime(params) / params.c_phi
    e = kinetic_pairing(f, g, params, spec, b=h)
    return Estimate(c * e.value, c * abs(e.error))


def trilinear_dual(g, f, h, params, spec) -> Estimate:
    """<Q*_g f, h>: Carleman sum over all scales plus O_*."""
    a = dual_sum(g, f, h, params, spec)
    b = o_star(f, h, g, params, spec)
    return Estimate(a.value + b.value, float(np.hypot(a.error, b.error)))


# --- co-plane change of variables -----------------------------------------------------------

def gram_det(u, u_bar):
    return quad.gram_determinant(u, u_bar)


@dataclass
class CoplaneCheck:
    lhs: Estimate
    rhs: Estimate
    gap: float                 # |lhs - rhs| / combined standard error
    relative_gap: float
    rhs_as_displayed: float    # rhs without the 2^(2(n-1)) normalization of unit-sphere measures
    excluded: int = 0          # samples dropped for nearly parallel normals


def _gauss_sample(rng, count, n, scale):
    x = rng.standard_normal((count, n))
    w = (2.0 * pi * scale**2) ** (n / 2.0) * np.exp(0.5 * np.sum(x * x, axis=-1))
    return scale * x, w


def coplane_identity_check(H, v_star, v_bar_star, spec: quad.QuadratureSpec, samples: int | None = None,
                           scale: float = 0.8, line_nodes: int = 128, line_radius: float = 8.0,
                           d_tol: float = 1e-12) -> CoplaneCheck:
    """Both sides of the co-plane change of variables by Monte Carlo (n = 3).

    H(v, v', v_bar') must be vectorized over leading axes.  Left side: v
    Gaussian, sigma and sigma_bar uniform on the unit sphere.  Right side:
    u = v' - v_* and u_bar = v_bar' - v_bar_* sampled in polar form (u_bar
    relative to the axis of u, polar angle uniform so that the factor
    D^(-1/2) = 1/(|u||u_bar| sin a) is absorbed), then a Gauss rule along the
    co-plane, which is a line in R^3.
    """
    v_star = np.asarray(v_star, dtype=float)
    v_bar_star = np.asarray(v_bar_star, dtype=float)
    n = v_star.size
    if n != 3:
        raise NotImplementedError("the Monte Carlo co-plane check is implemented for n = 3")
    total = int(samples or spec.mc_samples)
    s1 = sphere_area(n - 1)
    tl, wl = quad.gauss_legendre(-line_radius, line_radius, line_nodes)
    tl, wl = tl.ravel(), wl.ravel()

    def lhs_chunk(i, a, b):
        rng = quad.stream(spec.seed, 901, i)
        c = b - a
        v, wv = _gauss_sample(rng, c, n, scale)
        sg = rng.standard_normal((c, n))
        sg /= np.linalg.norm(sg, axis=-1, keepdims=True)
        sb = rng.standard_normal((c, n))
        sb /= np.linalg.norm(sb, axis=-1, keepdims=True)
        vp = 0.5 * (v + v_star) + 0.5 * np.linalg.norm(v - v_star, axis=-1)[:, None] * sg
        vbp = 0.5 * (v + v_bar_star) + 0.5 * np.linalg.norm(v - v_bar_star, axis=-1)[:, None] * sb
        x = wv * s1 * s1 * H(v, vp, vbp)
        return x.sum(), (x * x).sum(), c

    def rhs_chunk(i, a, b):
        rng = quad.stream(spec.seed, 902, i)
        c = b - a
        # |u| half-normal with scale `scale`, density 2 exp(-r^2/2s^2)/(s sqrt(2 pi))
        ru = np.abs(rng.standard_normal(c)) * scale * 1.5
        pu = 2.0 * np.exp(-0.5 * (ru / (1.5 * scale)) ** 2) / (1.5 * scale * np.sqrt(2.0 * pi))
        du = rng.standard_normal((c, n))
        du /= np.linalg.norm(du, axis=-1, keepdims=True)
        u = du * ru[:, None]
        rb = np.abs(rng.standard_normal(c)) * scale * 1.5
        pb = 2.0 * np.exp(-0.5 * (rb / (1.5 * scale)) ** 2) / (1.5 * scale * np.sqrt(2.0 * pi))
        alpha = pi * rng.random(c)
        phi = 2.0 * pi * rng.random(c)
        fr = quad.orthonormal_frame(du)
        db = (np.cos(alpha)[:, None] * du + np.sin(alpha)[:, None] *
              (np.cos(phi)[:, None] * fr[:, 0] + np.sin(phi)[:, None] * fr[:, 1]))
        ub = db * rb[:, None]
        vp = v_star + u
        vbp = v_bar_star + ub
        # measure: du dub = ru^2 dru dS(du) * rb^2 drb sin(alpha) d alpha d phi;
        # D^(-1/2) = 1 / (ru rb sin alpha)
        w = (s1 * ru / pu) * (pi * 2.0 * pi * rb / pb)
        dgram = gram_det(u, ub)
        ok = dgram > d_tol * (ru * rb) ** 2
        # co-plane: <v - v', u> = 0, <v - v_bar', u_bar> = 0, parametrized through its point nearest 0
        normals = np.stack([u, ub], axis=-2)
        rhs_b = np.stack([np.sum(u * vp, axis=-1), np.sum(ub * vbp, axis=-1)], axis=-1)
        gm = normals @ np.swapaxes(normals, -1, -2)
        gm[~ok] = np.eye(2)
        coef = np.linalg.solve(gm, rhs_b[..., None])[..., 0]
        p0 = np.einsum("ck,ckj->cj", coef, normals)
        d = np.cross(u, ub)
        d /= np.maximum(np.linalg.norm(d, axis=-1, keepdims=True), 1e-300)
        pts = p0[:, None, :] + tl[None, :, None] * d[:, None, :]
        dist = np.linalg.norm(pts - v_star, axis=-1) * np.linalg.norm(pts - v_bar_star, axis=-1)
        vals = H(pts, vp[:, None, :], vbp[:, None, :]) / dist ** (n - 2)
        x = np.where(ok, w * (vals @ wl), 0.0)
        return x.sum(), (x * x).sum(), c, int(np.sum(~ok))

    spec_n = quad.QuadratureSpec(**{**spec.__dict__, "mc_samples": total})
    lstat = quad.map_chunks(lhs_chunk, total, spec_n)
    rstat = quad.map_chunks(rhs_chunk, total, spec_n)
    lm, ls = quad.mc_estimate(lstat)
    rm, rs = quad.mc_estimate([r[:3] for r in rstat])
    factor = 2.0 ** (2 * (n - 1))
    lhs = Estimate(float(lm), float(ls))
    rhs = Estimate(float(factor * rm), float(factor * rs))
    comb = float(np.hypot(lhs.error, rhs.error))
    gap = abs(lhs.value - rhs.value) / comb if comb > 0 else 0.0
    rel = abs(lhs.value - rhs.value) / max(abs(lhs.value), 1e-300)
    return CoplaneCheck(lhs, rhs, gap, rel, float(rm), sum(r[3] for r in rstat))


# --- coercivity profile -------------------------------------------------------------------------

@dataclass
class CoercivityProfile:
    ks: list
    values: list                         # Estimate per k
    weighted_sum: Estimate               # sum_k 2^(k(n-1+2s)) I_k
    n_g: Estimate
    constant: float                      # weighted_sum / N_g
    diagnostics: dict = field(default_factory=dict)


def coercivity_values(g: TestFunction, fs, params: KernelParams, spec: quad.QuadratureSpec, k: int):
    """I_k(f) for several f: (f'-f)^2 1_{Omega_k} g_* |v-v_*|^(n-1+gamma+2s) with the unit-sphere measure."""
    fs = list(fs)
    n, s = params.n, params.s

    def cap(rz):
        return np.minimum(pi / 2, 2.0 * np.arcsin(np.minimum(1.0, 2.0**-k / rz)))

    def integrand(b):
        rz = np.linalg.norm(b.v - b.v_star, axis=-1)
        pre = b.ev(g, "v_star") * rz ** (n - 1 + 2 * s) / params.c_phi
        return np.stack([pre * _inner_sum(b.w_in, (b.ev(f, "vp") - b.ev(f, "v")[:, None]) ** 2) for f in fs], axis=1)

    return cr.estimate(params, g, spec, integrand, reach_of(*fs), inner="cap", cap_fn=cap, tag=_tag("ik", k))


def coercivity_profile(g: TestFunction, f: TestFunction, params: KernelParams, spec: quad.QuadratureSpec,
                       k_range=range(-3, 7)) -> CoercivityProfile:
    if g.support_radius is None:
        raise ValueError("the coercivity profile integrates v_* over a ball: give g a bounded support")
    ks = list(k_range)
    vals = [_scalar(*coercivity_values(g, [f], params, spec, k)) for k in ks]
    e = params.n - 1 + 2 * params.s
    ws = sum(2.0 ** (k * e) * v.value for k, v in zip(ks, vals))
    we = float(np.sqrt(sum((2.0 ** (k * e) * v.error) ** 2 for k, v in zip(ks, vals))))
    ng = n_g(f, g, params, spec)
    const = ws / ng.value if ng.value > 0 else float("inf")
    diag = {"support_radius": g.support_radius, "exponent": e}
    return CoercivityProfile(ks, vals, Estimate(ws, we), ng, const, diag)
