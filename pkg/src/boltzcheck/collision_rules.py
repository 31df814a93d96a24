"""Node sets for integrals over (v, v_*, sigma) and over Carleman planes.

Outer variables are (v_*, z) with z = v - v_* in the sigma picture and
(v_*, y) with y = v' - v_* in the Carleman picture; both use polar
coordinates in the relative variable so the kinetic factor |z|^gamma sits in
the radial weight.  The inner variables are the deviation angle theta and an
azimuth in S^(n-2); nodes come in antipodal azimuth pairs so the linear part
of any difference cancels before the angular singularity is met.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gamma as gamma_fn
from math import log, pi

import numpy as np
from scipy.special import gammaincinv, ndtri

from . import quadrature as quad
from .functions import lift
from .kernel import BUMP_SUPPORT, KernelParams, angular_model, chi, kernel_B_tilde, sphere_area


@dataclass
class Outer:
    v_star: np.ndarray   # (C, n)
    rel: np.ndarray      # (C, n): z (sigma picture) or y (Carleman picture)
    weight: np.ndarray   # (C,): includes C_Phi |rel|^gamma and the polar Jacobian

    @property
    def rel_norm(self):
        return np.linalg.norm(self.rel, axis=-1)


class _Evaluator:
    """Evaluates test functions at named node arrays, lifting each array once."""

    def ev(self, f, name: str):
        pts = getattr(self, name)
        if not hasattr(f, "lifted"):
            return f(pts)
        cache = self.__dict__.setdefault("_lifts", {})
        if name not in cache:
            cache[name] = lift(pts)
        return f.lifted(cache[name])


class SigmaBatch(_Evaluator):
    """Nodes of one outer chunk; post-collisional points are built on first use."""

    def __init__(self, v_star, v, dv, w_out, w_in, theta):
        self.v_star = v_star   # (C, n)
        self.v = v             # (C, n)
        self._dv = dv          # (C, I, n): v' - v
        self.w_out = w_out     # (C,)
        self.w_in = w_in       # (C, I)
        self.theta = theta     # (C, I)
        self._vp = self._vsp = None

    @property
    def vp(self):
        if self._vp is None:
            self._vp = self._dv + self.v[:, None, :]
        return self._vp

    @property
    def vsp(self):
        if self._vsp is None:
            self._vsp = self.v_star[:, None, :] - self._dv
        return self._vsp


@dataclass
class CarlemanBatch(_Evaluator):
    v_star: np.ndarray   # (C, n)
    v_prime: np.ndarray  # (C, n)
    v: np.ndarray        # (C, I, n), points of the plane E through v' with normal v' - v_*
    w_out: np.ndarray
    w_in: np.ndarray     # approximates the plane measure d pi_v times B~ (times chi_k if requested)
    theta: np.ndarray


@dataclass(frozen=True)
class OuterDesign:
    n: int
    gamma: float
    c_phi: float
    star_radius: float
    star_bounded: bool
    rel_radius: float
    star_center: tuple
    star_scale: float
    rel_scale: float


OUTER_TOL = 1e-10
CELL_SPAN = 7.0     # radius covered by ``radial_cells`` cells
PROPOSAL_WIDEN = 1.5


def reach_of(*functions) -> float:
    """Radius outside of which every decaying function is negligible (relative OUTER_TOL)."""
    r = 0.0
    for f in functions:
        if f is None or not getattr(f, "decays", True):
            continue
        r = max(r, f.support_radius if f.support_radius is not None else f.effective_radius(OUTER_TOL))
    return r if r > 0 else 1.0


def design_for(params: KernelParams, g, reach: float, star_radius: float | None = None) -> OuterDesign:
    bounded = g.support_radius is not None and star_radius is None
    rs = float(star_radius if star_radius is not None else reach_of(g))
    center, scale = g.proposal()
    # importance weights need proposal tails heavier than Gaussian tails of g
    scale = PROPOSAL_WIDEN * scale
    rel_scale = float(np.hypot(scale, max(reach / 3.0, 0.5)))
    return OuterDesign(params.n, params.gamma, params.c_phi, rs, bounded, rs + float(reach),
                       tuple(np.asarray(center, dtype=float)), float(scale), rel_scale)


def outer_deterministic(design: OuterDesign, spec: quad.QuadratureSpec) -> Outer:
    n = design.n
    p = spec.nodes_per_cell
    # cell counts follow the radius so the resolution per unit length is fixed
    star_cells = max(spec.radial_cells, int(np.ceil(spec.radial_cells * design.star_radius / CELL_SPAN)))
    rel_cells = max(2 * spec.radial_cells, int(np.ceil(spec.radial_cells * design.rel_radius / CELL_SPAN)))
    rs, wrs = quad.radial_rule(float(n - 1), design.star_radius, star_cells, p)
    d, wd = quad.sphere_rule(n, spec.angular_nodes)
    vstar = (rs[:, None, None] * d[None]).reshape(-1, n)
    wstar = (wrs[:, None] * wd[None]).ravel()
    rz, wrz = quad.radial_rule(float(n - 1) + design.gamma, design.rel_radius, rel_cells, p)
    rel = (rz[:, None, None] * d[None]).reshape(-1, n)
    wrel = (wrz[:, None] * wd[None]).ravel()
    keep = wstar > 0
    vstar, wstar = vstar[keep], wstar[keep]
    ns, nr = vstar.shape[0], rel.shape[0]
    return Outer(np.repeat(vstar, nr, axis=0), np.tile(rel, (ns, 1)),
                 design.c_phi * np.repeat(wstar, nr) * np.tile(wrel, ns))


def _directions_from(u):
    """Unit vectors from uniforms through normalized normals."""
    x = ndtri(u)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def outer_sample(design: OuterDesign, spec: quad.QuadratureSpec, tag: int, block: int, count: int,
                 start: int = 0) -> Outer:
    """Importance sample of (v_*, rel): samples start..start+count of block ``block`` of stream (seed, tag)."""
    n = design.n
    rng = quad.stream(spec.seed, tag, block)
    u = quad.uniforms(rng, count, 2 * n + 2, spec.mc_scheme, start)
    if design.star_bounded:
        r = design.star_radius * u[:, n] ** (1.0 / n)
        vstar = _directions_from(u[:, :n]) * r[:, None]
        wstar = np.full(count, sphere_area(n - 1) * design.star_radius**n / n)
    else:
        sc = design.star_scale
        x = ndtri(u[:, :n])
        vstar = np.asarray(design.star_center) + sc * x
        wstar = (2.0 * pi * sc**2) ** (n / 2.0) * np.exp(0.5 * np.sum(x * x, axis=-1))
    shape = 0.5 * (n + design.gamma)
    sig = design.rel_scale
    gsamp = gammaincinv(shape, u[:, n + 1])
    r = sig * np.sqrt(2.0 * gsamp)
    d = _directions_from(u[:, n + 2:])
    # density of r is 2 r^(2k-1) exp(-r^2/2 sig^2) / ((2 sig^2)^k Gamma(k)), k = (n + gamma)/2
    wrel = sphere_area(n - 1) * 0.5 * gamma_fn(shape) * (2.0 * sig**2) ** shape * np.exp(gsamp)
    return Outer(vstar, d * r[:, None], design.c_phi * wstar * wrel)


# --- inner angular rules ------------------------------------------------------------

def _theta_full(params: KernelParams, spec: quad.QuadratureSpec, count: int):
    model = angular_model(params)
    th, w = quad.theta_rule(params.s, spec.theta_levels, spec.nodes_per_cell, model.theta_max)
    w = w * model.regular_part(th)
    return np.broadcast_to(th, (count, th.size)), np.broadcast_to(w, (count, th.size))


def _theta_piece(params, spec, k, scale, picture):
    """Theta nodes carrying chi_k of the deviation |v - v'| for each outer node.

    picture 'sigma': deviation = |z| sin(theta/2); 'carleman': |y| tan(theta/2).
    Integration runs in x = log2(1/deviation) - k over the bump support.
    """
    model = angular_model(params)
    p = 2 * spec.nodes_per_cell
    lo_b, hi_b = BUMP_SUPPORT
    cap = scale / np.sqrt(2.0) if picture == "sigma" else scale
    x_lo = np.maximum(lo_b, -np.log2(cap) - k)
    empty = x_lo >= hi_b
    x_lo = np.where(empty, hi_b - 1.0, x_lo)
    x, wx = quad.gauss_legendre(x_lo, np.full_like(x_lo, hi_b), p)
    r = 2.0 ** (-k - x)
    sc = scale[:, None]
    if picture == "sigma":
        th = 2.0 * np.arcsin(np.minimum(r / sc, 1.0))
        dth = 2.0 / np.sqrt(np.maximum(sc**2 - r**2, 1e-300))
    else:
        th = 2.0 * np.arctan(r / sc)
        dth = 2.0 * sc / (sc**2 + r**2)
    w = wx * r * log(2.0) * dth * model.density(th) * chi(k, r)
    w = np.where(empty[:, None], 0.0, w)
    return th, w


def _theta_cap(params, spec, cap_theta):
    """Plain sin^(n-2) theta d theta on (0, cap] (no collision kernel) for the coercivity profile."""
    p = 2 * spec.nodes_per_cell
    levels = 4
    nodes, weights = [], []
    for m in range(levels):
        a = cap_theta * 2.0 ** (-m - 1)
        b = cap_theta * 2.0**-m
        x, w = quad.gauss_legendre(a, b, p)
        nodes.append(x)
        weights.append(w)
    x, w = quad.gauss_legendre(np.zeros_like(cap_theta), cap_theta * 2.0**-levels, p)
    nodes.append(x)
    weights.append(w)
    th = np.concatenate(nodes, axis=-1)
    w = np.concatenate(weights, axis=-1) * np.sin(th) ** (params.n - 2)
    return th, w


def _azimuths(n, spec):
    return quad.azimuth_rule(n, max(4, spec.angular_nodes // 2 if n == 3 else 2))


def sigma_batch(params: KernelParams, spec: quad.QuadratureSpec, outer: Outer, inner: str = "full",
                k: int | None = None, cap=None) -> SigmaBatch:
    n = params.n
    z = outer.rel
    rz = outer.rel_norm
    khat = z / rz[:, None]
    frame = quad.orthonormal_frame(khat)               # (C, n-1, n)
    az, waz = _azimuths(n, spec)
    ez = np.einsum("am,cmj->caj", az, frame)           # (C, A, n)
    C = z.shape[0]
    if inner == "full":
        th, wt = _theta_full(params, spec, C)
    elif inner == "piece":
        th, wt = _theta_piece(params, spec, k, rz, "sigma")
    elif inner == "cap":
        th, wt = _theta_cap(params, spec, cap)
    else:
        raise ValueError(inner)
    half = 0.5 * rz[:, None]
    a = half * (np.cos(th) - 1.0)
    b = half * np.sin(th)
    dv = b[:, :, None, None] * ez[:, None, :, :]
    dv += a[:, :, None, None] * khat[:, None, None, :]
    v = outer.v_star + z
    w_in = (wt[:, :, None] * waz[None, None, :]).reshape(C, -1)
    thf = np.broadcast_to(th[:, :, None], (C, th.shape[1], az.shape[0])).reshape(C, -1)
    return SigmaBatch(outer.v_star, v, dv.reshape(C, -1, n), outer.weight, w_in, thf)


def carleman_batch(params: KernelParams, spec: quad.QuadratureSpec, outer: Outer, inner: str = "full",
                   k: int | None = None) -> CarlemanBatch:
    n = params.n
    y = outer.rel
    ry = outer.rel_norm
    yhat = y / ry[:, None]
    frame = quad.orthonormal_frame(yhat)
    az, waz = _azimuths(n, spec)
    ez = np.einsum("am,cmj->caj", az, frame)
    C = y.shape[0]
    model = angular_model(params)
    if inner == "full":
        th, wt = _theta_full(params, spec, C)
        # _theta_full carries density(theta); strip it to rebuild the weight from B~ below
        dens = model.density(th)
    elif inner == "piece":
        th, wt = _theta_piece(params, spec, k, ry, "carleman")
        dens = model.density(th)
    else:
        raise ValueError(inner)
    rho = ry[:, None] * np.tan(0.5 * th)               # |v - v'|
    vprime = outer.v_star + y
    v = vprime[:, None, None, :] + rho[:, :, None, None] * ez[:, None, :, :]
    # Jacobian of theta -> rho and the plane's polar measure rho^(n-2) d rho d omega
    drho = 0.5 * ry[:, None] / np.cos(0.5 * th) ** 2
    vs = np.broadcast_to(outer.v_star[:, None, None, :], v.shape)
    vpb = np.broadcast_to(vprime[:, None, None, :], v.shape)
    bt = kernel_B_tilde(v, vs, vpb, params, model, tol=1e-7)               # (C, T, A)
    phi_out = params.c_phi * ry ** params.gamma
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(dens[:, :, None] > 0, bt / np.maximum(dens, 1e-300)[:, :, None], 0.0)
    factor = factor * (rho ** (n - 2) * drho)[:, :, None] / phi_out[:, None, None]
    w_in = (wt[:, :, None] * factor * waz[None, None, :]).reshape(C, -1)
    thf = np.broadcast_to(th[:, :, None], factor.shape).reshape(C, -1)
    return CarlemanBatch(outer.v_star, vprime, v.reshape(C, -1, n), outer.weight, w_in, thf)


# --- driver -------------------------------------------------------------------------------

def run(params: KernelParams, g, spec: quad.QuadratureSpec, integrand, reach: float, picture: str = "sigma",
        inner: str = "full", k: int | None = None, cap_fn=None, star_radius: float | None = None, tag: int = 11):
    """Integrate ``integrand(batch) -> (C,) or (C, m)`` against the outer weights.

    Returns (values, errors) for the given resolution only: deterministic
    errors are left to the caller (who compares resolutions), Monte Carlo
    errors are one standard error of the outer sample.
    """
    design = design_for(params, g, reach, star_radius)
    make = sigma_batch if picture == "sigma" else carleman_batch

    def evaluate(outer):
        kw = {}
        if inner == "cap":
            kw["cap"] = cap_fn(outer.rel_norm)
        batch = make(params, spec, outer, inner, k, **kw) if picture == "sigma" else make(params, spec, outer, inner, k)
        vals = np.asarray(integrand(batch), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        return vals * outer.weight[:, None]

    if spec.is_mc:
        def chunk(i, start, count):
            vals = evaluate(outer_sample(design, spec, tag, i, count, start))
            return vals.sum(axis=0), (vals**2).sum(axis=0), count

        mean, se = quad.mc_map(chunk, spec)
        return np.atleast_1d(mean), np.atleast_1d(se)

    outer = outer_deterministic(design, spec)

    def chunk(i, a, b):
        sub = Outer(outer.v_star[a:b], outer.rel[a:b], outer.weight[a:b])
        return evaluate(sub).sum(axis=0)

    parts = quad.map_chunks(chunk, outer.weight.size, spec)
    total = quad.pairwise_sum(parts) if parts else np.zeros(1)
    return np.atleast_1d(total), np.zeros_like(np.atleast_1d(total))


def estimate(params, g, spec, integrand, reach, **kw):
    """Value and error bound: MC standard error, or the gap to the next-coarser deterministic rule."""
    val, err = run(params, g, spec, integrand, reach, **kw)
    if not spec.is_mc:
        coarse, _ = run(params, g, spec.coarsened(), integrand, reach, **kw)
        err = np.abs(val - coarse)
    return val, err


def outer_integral(params: KernelParams, g, spec: quad.QuadratureSpec, fn, reach: float,
                   star_radius: float | None = None, tag: int = 12, with_kinetic: bool = True):
    """int int fn(v_*, v) Phi(|v - v_*|) dv dv_* (Phi dropped if ``with_kinetic`` is False).

    ``fn`` gets (v_star (C, n), v (C, n)) and returns (C,) or (C, m).
    Same outer rules as ``run``, no angular variables.
    """
    design = design_for(params, g, reach, star_radius)

    def evaluate(outer):
        vals = np.asarray(fn(outer.v_star, outer.v_star + outer.rel), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        w = outer.weight
        if not with_kinetic:
            w = w / (params.c_phi * outer.rel_norm ** params.gamma)
        return vals * w[:, None]

    def once(sp):
        if sp.is_mc:
            def chunk(i, start, count):
                vals = evaluate(outer_sample(design, sp, tag, i, count, start))
                return vals.sum(axis=0), (vals**2).sum(axis=0), count

            return quad.mc_map(chunk, sp)
        outer = outer_deterministic(design, sp)

        def chunk(i, a, b):
            return evaluate(Outer(outer.v_star[a:b], outer.rel[a:b], outer.weight[a:b])).sum(axis=0)

        return quad.pairwise_sum(quad.map_chunks(chunk, outer.weight.size, sp)), 0.0

    val, err = once(spec)
    if not spec.is_mc:
        err = np.abs(val - once(spec.coarsened())[0])
    return np.atleast_1d(val), np.atleast_1d(err)
