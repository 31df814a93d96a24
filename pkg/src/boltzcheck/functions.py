"""Test functions on the lifted paraboloid and the assumption checkers.

A lifted Gaussian mixture is F(x) = sum_j a_j exp(-sum_m beta_jm (x_m - c_jm)^2)
on R^(n+1); its restriction is f(v) = F(v, |v|^2/2).  Value, gradient and
Hessian of F are closed-form, which gives the derivative envelopes exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import pi, sqrt
from typing import Callable

import numpy as np

from . import quadrature as quad
from .kernel import KernelParams, ParameterError, sphere_area


def lift(v):
    v = np.asarray(v, dtype=float)
    return np.concatenate([v, 0.5 * np.sum(v * v, axis=-1, keepdims=True)], axis=-1)


def bracket(v):
    """<v> = sqrt(1 + |v|^2)."""
    v = np.asarray(v, dtype=float)
    return np.sqrt(1.0 + np.sum(v * v, axis=-1))


class TestFunction:
    """Interface shared by everything that can be integrated as f, g or h."""

    n: int
    support_radius: float | None = None   # ball around the origin containing the support

    def __call__(self, v):
        raise NotImplementedError

    def effective_radius(self, tol: float = 1e-16) -> float:
        raise NotImplementedError

    def proposal(self):
        """(center, scale) of a Gaussian that covers the bulk of |f|."""
        return np.zeros(self.n), max(0.5, self.effective_radius(1e-3) / 3.0)

    @property
    def reach(self) -> float:
        return self.support_radius if self.support_radius is not None else self.effective_radius()


class LiftedGaussianMixture(TestFunction):
    def __init__(self, amplitudes, centers, betas, name: str = ""):
        a = np.atleast_1d(np.asarray(amplitudes, dtype=float))
        c = np.atleast_2d(np.asarray(centers, dtype=float))
        b = np.asarray(betas, dtype=float)
        if c.shape[0] != a.size:
            raise ValueError("one center per amplitude is required")
        d = c.shape[1]
        if d < 3:
            raise ValueError("centers live in R^(n+1) with n >= 2")
        # one scalar per component, or a full (components, n+1) diagonal
        b = np.broadcast_to(b.reshape(-1, 1) if b.ndim <= 1 else b, (a.size, d)).astype(float).copy()
        if np.any(b < 0) or np.any(np.all(b[:, :-1] == 0, axis=1)):
            raise ValueError("inverse widths must be nonnegative and positive in the velocity coordinates")
        self.amplitudes, self.centers, self.betas = a, c, b
        self.n = d - 1
        self.name = name
        for arr in (self.amplitudes, self.centers, self.betas):
            arr.setflags(write=False)

    # algebra used by homogeneity checks
    def scaled(self, factor: float) -> "LiftedGaussianMixture":
        return LiftedGaussianMixture(self.amplitudes * factor, self.centers, self.betas, self.name)

    def __mul__(self, factor):
        return self.scaled(float(factor))

    __rmul__ = __mul__

    def __neg__(self):
        return self.scaled(-1.0)

    def __add__(self, other: "LiftedGaussianMixture"):
        return LiftedGaussianMixture(np.concatenate([self.amplitudes, other.amplitudes]),
                                     np.concatenate([self.centers, other.centers]),
                                     np.concatenate([self.betas, other.betas]))

    def _components(self, x):
        d = x[..., None, :] - self.centers
        e = np.exp(-np.sum(self.betas * d * d, axis=-1))
        return d, self.amplitudes * e

    def lifted(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, x.shape[-1])
        out = np.zeros(flat.shape[0])
        # differences are formed before squaring so nearby points keep full relative precision
        for a, c, b in zip(self.amplitudes, self.centers, self.betas):
            d = flat - c
            d *= d
            out += a * np.exp(-(d @ b))
        return out.reshape(x.shape[:-1])

    def gradient(self, x):
        d, ae = self._components(np.asarray(x, dtype=float))
        return np.sum(-2.0 * self.betas * d * ae[..., None], axis=-2)

    def hessian(self, x):
        d, ae = self._components(np.asarray(x, dtype=float))
        bd = self.betas * d
        h = 4.0 * bd[..., :, None] * bd[..., None, :]
        h = h - 2.0 * np.eye(self.n + 1) * self.betas[..., None, :]
        return np.sum(h * ae[..., None, None], axis=-3)

    def __call__(self, v):
        return self.lifted(lift(v))

    def envelope_lifted(self, x, i: int):
        """|grad~|^i F at lifted points x: max over orders j <= i of sup_|xi|<=1 |(xi . grad)^j F|."""
        x = np.asarray(x, dtype=float)
        out = np.abs(self.lifted(x))
        if i >= 1:
            out = np.maximum(out, np.linalg.norm(self.gradient(x), axis=-1))
        if i >= 2:
            out = np.maximum(out, np.max(np.abs(np.linalg.eigvalsh(self.hessian(x))), axis=-1))
        if i > 2:
            raise ValueError("envelopes are implemented for i <= 2")
        return out

    def effective_radius(self, tol: float = 1e-16) -> float:
        rad = 0.0
        scale = np.sum(np.abs(self.amplitudes))
        if scale == 0:
            return 1.0
        level = np.log(scale / tol)
        for a, c, b in zip(self.amplitudes, self.centers, self.betas):
            cv = np.linalg.norm(c[:-1])
            bv = b[:-1].min()
            bt = b[-1]
            r = cv
            step = 0.125
            # smallest radius beyond which the exponent certainly exceeds level
            while True:
                lower = bv * max(r - cv, 0.0) ** 2 + bt * max(0.5 * r * r - c[-1], 0.0) ** 2
                if lower >= level:
                    break
                r += step
                step *= 1.05
            rad = max(rad, r)
        return rad

    def proposal(self):
        w = np.abs(self.amplitudes)
        center = np.sum(w[:, None] * self.centers[:, :-1], axis=0) / w.sum()
        return center, max(0.5, self.effective_radius(1e-3) / 3.0)

    def __repr__(self):
        return f"LiftedGaussianMixture(n={self.n}, components={self.amplitudes.size}, name={self.name!r})"


def gaussian(n: int, amplitude=1.0, center=None, beta=0.5, name="") -> LiftedGaussianMixture:
    c = np.zeros(n + 1) if center is None else np.asarray(center, dtype=float)
    return LiftedGaussianMixture([amplitude], [c], [beta], name)


def mixture(components, name="") -> LiftedGaussianMixture:
    """components: iterable of (amplitude, center in R^(n+1), inverse width)."""
    a, c, b = zip(*components)
    b = [np.asarray(x, dtype=float) * np.ones(len(c[0])) for x in b]
    return LiftedGaussianMixture(a, c, np.array(b), name)


@dataclass(frozen=True)
class MaxwellianParams:
    rho: float = 1.0
    u: tuple = ()
    temp: float = 1.0


def maxwellian(params: MaxwellianParams | float = 1.0, u=None, temp: float | None = None, n: int = 3):
    """rho (2 pi T)^(-n/2) exp(-|v - u|^2 / 2T) as a lifted Gaussian flat in the last coordinate."""
    if isinstance(params, MaxwellianParams):
        rho, u, temp = params.rho, params.u, params.temp
    else:
        rho = params
    temp = 1.0 if temp is None else temp
    u = np.zeros(n) if u is None or len(u) == 0 else np.asarray(u, dtype=float)
    n = u.size
    if not rho > 0 or not temp > 0:
        raise ParameterError("Maxwellian needs rho > 0 and T > 0")
    beta = np.r_[np.full(n, 0.5 / temp), 0.0]
    amp = rho / (2.0 * pi * temp) ** (n / 2.0)
    return LiftedGaussianMixture([amp], [np.r_[u, 0.0]], beta[None, :], name="maxwellian")


class BallIndicator(TestFunction):
    def __init__(self, n: int, radius: float = 1.0, height: float = 1.0):
        self.n, self.radius, self.height = n, float(radius), float(height)
        self.support_radius = self.radius

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        return np.where(np.sum(v * v, axis=-1) <= self.radius**2, self.height, 0.0)

    def effective_radius(self, tol=1e-16):
        return self.radius

    def proposal(self):
        return np.zeros(self.n), self.radius / 2.0


class Truncated(TestFunction):
    """base * 1_{|v| <= radius}."""

    def __init__(self, base: TestFunction, radius: float):
        self.base, self.n = base, base.n
        self.support_radius = float(radius)

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        return np.where(np.sum(v * v, axis=-1) <= self.support_radius**2, self.base(v), 0.0)

    def effective_radius(self, tol=1e-16):
        return min(self.support_radius, self.base.effective_radius(tol))

    def proposal(self):
        c, s = self.base.proposal()
        return c, min(s, self.support_radius / 2.0)


class Pointwise(TestFunction):
    """Any vectorized callable; radius/scale tell quadratures where it lives.

    ``decays=False`` marks growing weights such as |v|^2 or log f, which then
    do not enlarge integration domains.
    """

    def __init__(self, fn: Callable, n: int, radius: float = 8.0, scale: float = 1.0, name: str = "",
                 decays: bool = True):
        self.fn, self.n, self.radius, self.scale, self.name = fn, n, float(radius), float(scale), name
        self.decays = decays

    def __call__(self, v):
        return np.asarray(self.fn(np.asarray(v, dtype=float)), dtype=float)

    def effective_radius(self, tol=1e-16):
        return self.radius

    def proposal(self):
        return np.zeros(self.n), self.scale


def sqrt_of(f: TestFunction) -> Pointwise:
    return Pointwise(lambda v: np.sqrt(np.maximum(f(v), 0.0)), f.n, f.reach, f.proposal()[1], "sqrt")


def eval_restricted(f: LiftedGaussianMixture, v):
    return f(v)


def deriv_envelope(f: LiftedGaussianMixture, v, i: int):
    if i not in (1, 2):
        raise ValueError("i must be 1 or 2")
    return f.envelope_lifted(lift(v), i)


# --- path envelopes along collision pairs ---------------------------------------------

GOLDEN = (1.0 + sqrt(5.0)) / 2.0


def path_envelope(f: LiftedGaussianMixture, v, v_prime, i: int, nodes: int = 16):
    """int_0^1 |grad~|^i F(zeta~(t)) dt along the lifted straight path from v to v'."""
    t, w = quad.gauss_legendre(0.0, 1.0, nodes)
    t, w = t.ravel(), w.ravel()
    v = np.asarray(v, dtype=float)[..., None, :]
    vp = np.asarray(v_prime, dtype=float)[..., None, :]
    zeta = t[:, None] * vp + (1.0 - t[:, None]) * v
    return np.sum(w * f.envelope_lifted(lift(zeta), i), axis=-1)


def first_order_defect(f: LiftedGaussianMixture, v, v_prime):
    return f(v_prime) - f(v)


def second_order_defect(f: LiftedGaussianMixture, v, v_prime):
    """F(v~') - F(v~) - d zeta~(0) . grad F(v~)."""
    v = np.asarray(v, dtype=float)
    vp = np.asarray(v_prime, dtype=float)
    d = np.concatenate([vp - v, np.sum(v * (vp - v), axis=-1, keepdims=True)], axis=-1)
    return f(vp) - f(v) - np.sum(d * f.gradient(lift(v)), axis=-1)


# --- Assumption U -----------------------------------------------------------------------

def ray_ball_rule(center, ball_radius: float, n: int, alpha: float, spec: quad.QuadratureSpec):
    """Nodes and weights for int_{B(0, R)} |x - center|^alpha G(x) dx in polar coordinates about center.

    Each ray from ``center`` is cut exactly at the sphere, so indicator-type
    integrands lose nothing at the boundary.  From outside the ball the rays
    fill the tangent cone only, however small it is.
    """
    center = np.asarray(center, dtype=float)
    if center @ center >= ball_radius**2:
        return _cone_rule(center, ball_radius, n, alpha, spec)
    dirs, wd = quad.sphere_rule(n, spec.angular_nodes)
    p = spec.nodes_per_cell * 2
    cb = dirs @ center
    disc = cb**2 - (center @ center - ball_radius**2)
    hit = disc > 0
    root = np.sqrt(np.where(hit, disc, 0.0))
    t1 = np.maximum(-cb - root, 0.0)
    t2 = np.maximum(-cb + root, 0.0)
    inside = center @ center < ball_radius**2
    pts, wts = [], []
    cells = spec.radial_cells
    tj, wj = quad.jacobi_rule(float(n - 1 + alpha), p)
    for j in range(dirs.shape[0]):
        if not hit[j] or t2[j] <= t1[j]:
            continue
        a, b = t1[j], t2[j]
        edges = np.linspace(a, b, cells + 1)
        if inside:
            h = edges[1] - edges[0]
            r = [h * tj]
            w = [wj * h ** (n + alpha)]
            lo = 1
        else:
            r, w, lo = [], [], 0
        if cells > lo:
            x, ww = quad.gauss_legendre(edges[lo:-1], edges[lo + 1:], p)
            r.append(x.ravel())
            w.append((ww * x ** (n - 1 + alpha)).ravel())
        r = np.concatenate(r)
        pts.append(center + r[:, None] * dirs[j])
        wts.append(np.concatenate(w) * wd[j])
    if not pts:
        return np.zeros((0, n)), np.zeros(0)
    return np.concatenate(pts), np.concatenate(wts)


def _cone_rule(center, ball_radius, n, alpha, spec):
    dist = float(np.linalg.norm(center))
    if dist == 0.0:
        return np.zeros((0, n)), np.zeros(0)
    e = -center / dist
    beta = np.arcsin(min(1.0, ball_radius / dist))
    p = spec.nodes_per_cell * 2
    # t = beta (1 - tau^2) removes the square-root edge of the chord length at the cone boundary
    tau, wtau = quad.gauss_legendre(0.0, 1.0, 2 * p)
    tau, wtau = tau.ravel(), wtau.ravel()
    t = beta * (1.0 - tau**2)
    wt = 2.0 * beta * tau * wtau * np.sin(t) ** (n - 2)
    az, wa = quad.azimuth_rule(n, max(8, spec.angular_nodes // 2))
    side = az @ quad.orthonormal_frame(e)
    dirs = (np.cos(t)[:, None, None] * e + np.sin(t)[:, None, None] * side[None]).reshape(-1, n)
    wd = (wt[:, None] * wa[None, :]).ravel()
    cb = dirs @ center
    root = np.sqrt(np.maximum(cb**2 - (dist**2 - ball_radius**2), 0.0))
    a, b = np.maximum(-cb - root, 0.0), np.maximum(-cb + root, 0.0)
    cells = spec.radial_cells
    edges = a[:, None] + (b - a)[:, None] * np.linspace(0.0, 1.0, cells + 1)
    x, ww = quad.gauss_legendre(edges[:, :-1], edges[:, 1:], p)          # (rays, cells, p)
    w = ww * x ** (n - 1 + alpha) * wd[:, None, None]
    pts = center + x.reshape(x.shape[0], -1)[..., None] * dirs[:, None, :]
    return pts.reshape(-1, n), w.ravel()


def _moment_ratio(g: TestFunction, v, a: float, i: int, spec):
    R = g.reach
    pts, w = ray_ball_rule(v, R, g.n, a, spec)
    if w.size == 0:
        return 0.0
    val = np.sum(w * bracket(pts) ** i * np.abs(g(pts)))
    return float(val) / float(bracket(v)) ** a


def u_grid(n: int, reach: float):
    radii = np.r_[np.linspace(0.0, 2.0 * reach + 2.0, 17)[:-1], np.geomspace(2.0 * reach + 2.0, 200.0, 8)]
    dirs, _ = quad.sphere_rule(n, 8)
    return np.concatenate([np.zeros((1, n)), (radii[1:, None, None] * dirs[None]).reshape(-1, n)])


def assumption_u_constant(g: TestFunction, params: KernelParams, spec: quad.QuadratureSpec | None = None,
                          grid=None, details: bool = False):
    """sup over a in {gamma, gamma+2s} and a v-grid of <v>^-a int |v-v_*|^a <v_*>^i |g_*| dv_*.

    Both endpoints suffice: for fixed v the map a -> log of the ratio is
    convex (Hoelder), so its maximum over the interval sits at an end.
    """
    spec = spec or quad.QuadratureSpec()
    if params.gamma <= -params.n:
        raise ParameterError("convolution diverges for gamma <= -n")
    i = params.i_exponent
    grid = u_grid(g.n, g.reach) if grid is None else np.asarray(grid, dtype=float)
    best, arg = 0.0, None
    for a in (params.gamma, params.gamma + 2.0 * params.s):
        for v in grid:
            r = _moment_ratio(g, v, a, i, spec)
            if r > best:
                best, arg = r, (a, v)
    if details:
        return best, arg
    return best


# --- Assumption L: tube masses ---------------------------------------------------------

def _tube_directions(n: int, m: int):
    if n == 2:
        ph = pi * np.arange(m) / m
        return np.stack([np.cos(ph), np.sin(ph)], axis=-1)
    # Fibonacci points on the upper hemisphere
    k = np.arange(m) + 0.5
    z = k / m
    ph = pi * (1.0 + 5.0**0.5) * k
    r = np.sqrt(1.0 - z * z)
    return np.stack([r * np.cos(ph), r * np.sin(ph), z], axis=-1)


def _offsets(n: int, radius: float, m: int):
    t = np.linspace(-radius, radius, m)
    if n == 2:
        return t[:, None]
    a, b = np.meshgrid(t, t, indexing="ij")
    pts = np.stack([a.ravel(), b.ravel()], axis=-1)
    return pts[np.sum(pts**2, axis=-1) <= radius**2 + 1e-12]


def _ball_mass(g: TestFunction, R: float, spec):
    lim = R if g.support_radius is None else min(R, g.support_radius)
    pts, w = ray_ball_rule(np.zeros(g.n), lim, g.n, 0.0, spec)
    return float(np.sum(w * g(pts)))


def _tube_masses(g: TestFunction, R: float, delta: float, dirs, offsets, spec):
    """Mass of g inside B_R intersected with tubes {dist(x, p + R e) < delta}; one row per (dir, offset)."""
    n = g.n
    lim = R if g.support_radius is None else min(R, g.support_radius)
    p = spec.nodes_per_cell
    rho, wr = quad.radial_rule(float(n - 2), delta, 2, p)
    az, wa = quad.azimuth_rule(n, max(8, spec.angular_nodes // 2))
    tq, wt = quad.gauss_legendre(-1.0, 1.0, 2 * p)
    tq, wt = tq.ravel(), wt.ravel()
    out = np.zeros((len(dirs), len(offsets)))
    for di, e in enumerate(dirs):
        frame = quad.orthonormal_frame(e)          # (n-1, n)
        cross = (rho[:, None, None] * (az @ frame)[None, :, :]).reshape(-1, n)
        wc = (wr[:, None] * wa[None, :]).ravel()
        base = offsets @ frame                      # (P, n)
        q = base[:, None, :] + cross[None, :, :]    # (P, C, n)
        half = np.sqrt(np.maximum(lim**2 - np.sum(q * q, axis=-1), 0.0))
        pts = q[..., None, :] + (half[..., None] * tq)[..., None] * e
        vals = g(pts) * (half[..., None] * wt)
        out[di] = np.sum(np.sum(vals, axis=-1) * wc, axis=-1)
    return out


def tube_mass_inf(g: TestFunction, R: float, delta: float, spec: quad.QuadratureSpec | None = None,
                  n_dirs: int | None = None, n_offsets: int = 9, details: bool = False):
    """inf over linear tubes T_delta of int_{B_R minus T_delta} g (grid search, refined once)."""
    spec = spec or quad.QuadratureSpec()
    if not R > delta > 0:
        raise ParameterError("need R > delta > 0")
    n = g.n
    total = _ball_mass(g, R, spec)
    if total <= 0:
        return (0.0, None) if details else 0.0
    n_dirs = n_dirs or (12 if n == 2 else 24)
    dirs = _tube_directions(n, n_dirs)
    offs = _offsets(n, R, n_offsets)
    masses = _tube_masses(g, R, delta, dirs, offs, spec)
    di, oi = np.unravel_index(np.argmax(masses), masses.shape)
    e0, p0 = dirs[di], offs[oi]
    # one local refinement around the best tube
    h_dir = pi / n_dirs
    h_off = 2.0 * R / max(n_offsets - 1, 1)
    rng = np.linspace(-1.0, 1.0, 5)
    if n == 2:
        ang = np.arctan2(e0[1], e0[0]) + h_dir * rng
        dirs2 = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    else:
        fr = quad.orthonormal_frame(e0)
        a, b = np.meshgrid(rng * h_dir, rng * h_dir, indexing="ij")
        d = e0 + a.ravel()[:, None] * fr[0] + b.ravel()[:, None] * fr[1]
        dirs2 = d / np.linalg.norm(d, axis=-1, keepdims=True)
    best = masses[di, oi]
    best_tube = (e0, p0)
    for e in dirs2:
        # offsets are coordinates in the frame of e; reuse p0's coordinates as the local center
        if n == 2:
            offs2 = p0 + (h_off * rng)[:, None]
        else:
            a, b = np.meshgrid(h_off * rng, h_off * rng, indexing="ij")
            offs2 = p0 + np.stack([a.ravel(), b.ravel()], axis=-1)
        m2 = _tube_masses(g, R, delta, e[None, :], offs2, spec)[0]
        j = int(np.argmax(m2))
        if m2[j] > best:
            best, best_tube = m2[j], (e, offs2[j])
    val = max(total - best, 0.0)
    if details:
        return val, {"total": total, "tube_mass": best, "tube": best_tube}
    return val


def ball_mass(g: TestFunction, R: float, spec: quad.QuadratureSpec | None = None) -> float:
    return _ball_mass(g, R, spec or quad.QuadratureSpec())


def corollary_l_delta(g: TestFunction, R: float, target_fraction: float = 0.5,
                      spec: quad.QuadratureSpec | None = None, tol: float = 1e-4) -> float:
    """Largest delta (to tol * R) such that every tube leaves target_fraction of the mass of g on B_R."""
    spec = spec or quad.QuadratureSpec()
    total = _ball_mass(g, R, spec)
    if not total > 0:
        raise ParameterError("g has no mass on B_R; no admissible delta")
    if target_fraction <= 0:
        return float(R)
    lo, hi = 0.0, R
    while hi - lo > tol * R:
        mid = 0.5 * (lo + hi)
        if mid > 0 and tube_mass_inf(g, R, mid, spec) >= target_fraction * total:
            lo = mid
        else:
            hi = mid
    if lo == 0.0:
        raise ParameterError("no delta found above the bisection tolerance")
    return lo


@dataclass(frozen=True)
class AssumptionConstants:
    c_g_upper: float
    i_exponent: int
    c_g_lower: float
    radius_R: float
    radius_delta: float


def assumption_constants(g: TestFunction, params: KernelParams, R: float, delta: float,
                         spec: quad.QuadratureSpec | None = None) -> AssumptionConstants:
    if not R > delta > 0:
        raise ParameterError("need R > delta > 0")
    return AssumptionConstants(assumption_u_constant(g, params, spec), params.i_exponent,
                               tube_mass_inf(g, R, delta, spec), R, delta)


def sphere_measure(n: int) -> float:
    return sphere_area(n - 1)
