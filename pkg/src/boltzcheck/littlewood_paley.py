"""Littlewood-Paley projections adapted to the lifted paraboloid.

P_j f(v) = int 2^(nj) phi(2^j (v~ - v~')) <v'> f(v') dv' with v~ = (v, |v|^2/2)
and phi a radial bump on the unit ball of R^(n+1).  For a point v the
support in v' is exactly {rho^2 (1 + (<v, w> + rho/2)^2) < 4^-j} along each
direction w, so the v' integral is done in polar coordinates about v, cut at
that boundary; a Gauss rule on the exact support converges fast even
though phi is not analytic at its edge.

Derivatives of P_j F on R^(n+1) (needed for |grad~|^i Q_j f) are taken by
differentiating the kernel under the integral sign.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from math import ceil

import numpy as np
from scipy import integrate

from . import quadrature as quad
from .collision_rules import reach_of
from .functions import TestFunction, bracket, lift
from .kernel import sphere_area
from .quadrature import Estimate


def bump(r):
    """exp(-1/(1 - r^2)) on r < 1, zero elsewhere (unnormalized)."""
    r = np.asarray(r, dtype=float)
    u = 1.0 - r * r
    out = np.zeros_like(r)
    ok = u > 0
    out[ok] = np.exp(-1.0 / u[ok])
    return out


PROFILES = ("plain", "cancelling")


def _moment(k):
    val, _ = integrate.quad(lambda r: float(bump(np.array(r))) * r**k, 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    return val


@lru_cache(maxsize=None)
def profile_coefficients(n: int, profile: str = "plain"):
    """(scale, a, b) with phi(r) = scale (a + b r^2) bump(r).

    'plain' is the bump itself.  'cancelling' picks a so that
    int_0^1 phi'(r) r^(n-2) dr = 0, which kills the slice integral of the
    second normal derivative of phi(|y|); without it the Hessian of P_j F
    on the paraboloid does not shrink with j.
    """
    if profile == "plain":
        a, b = 1.0, 0.0
    elif profile == "cancelling":
        # n = 2: phi(0) = 0; n >= 3: int phi r^(n-3) = 0 after one integration by parts
        a, b = (0.0 if n == 2 else -_moment(n - 1) / _moment(n - 3)), 1.0
    else:
        raise ValueError(f"unknown profile {profile!r}")
    mass = sphere_area(n - 1) * (a * _moment(n - 1) + b * _moment(n + 1))
    return 1.0 / mass, a, b


def slice_normalization(n: int) -> float:
    """|S^(n-1)| int_0^1 bump(r) r^(n-1) dr: the integral of the bump over an n-dim slice through 0."""
    return sphere_area(n - 1) * _moment(n - 1)


def profile_parts(n: int, profile: str, t):
    """psi, psi', psi'' in t = |y|^2 for Phi(y) = psi(|y|^2)."""
    scale, a, b = profile_coefficients(n, profile)
    t = np.asarray(t, dtype=float)
    u = np.maximum(1.0 - t, 1e-300)
    e = np.where(t < 1.0, np.exp(-1.0 / u), 0.0)
    e1 = -e / (u * u)
    e2 = e * (1.0 - 2.0 * u) / u**4
    q = a + b * t
    return scale * q * e, scale * (b * e + q * e1), scale * (2.0 * b * e1 + q * e2)


@dataclass(frozen=True)
class LPSpec:
    j_max: int = 5
    radial_nodes: int = 32
    angular_nodes: int = 32
    grid_cell: float = 1.5        # width of one tensor grid cell (nodes_per_cell Gauss nodes each)
    block: int = 64
    profile: str = "plain"

    def __post_init__(self):
        if self.j_max < 1:
            raise ValueError("j_max must be at least 1")
        if self.profile not in PROFILES:
            raise ValueError(f"profile must be one of {PROFILES}")

    def coarsened(self) -> "LPSpec":
        return replace(self, radial_nodes=max(8, (3 * self.radial_nodes) // 4),
                       angular_nodes=max(8, (3 * self.angular_nodes) // 4), grid_cell=self.grid_cell * 1.25)

    def phi(self, n: int, r):
        """The normalized profile: its integral over every n-dim linear slice through 0 is 1."""
        r = np.asarray(r, dtype=float)
        return profile_parts(n, self.profile, r * r)[0]


@dataclass
class LPGrid:
    points: np.ndarray     # (N, n)
    weights: np.ndarray    # (N,)
    shape: tuple

    @property
    def n(self):
        return self.points.shape[1]


def lp_grid(f: TestFunction, quad_spec: quad.QuadratureSpec, lp: LPSpec, half_width: float | None = None,
            center=None) -> LPGrid:
    """Tensor Gauss grid over a box covering the bulk of f."""
    n = f.n
    L = float(half_width if half_width is not None else reach_of(f))
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    cells = max(2, int(ceil(2.0 * L / lp.grid_cell)))
    edges = np.linspace(-L, L, cells + 1)
    x, w = quad.gauss_legendre(edges[:-1], edges[1:], quad_spec.nodes_per_cell)
    x, w = x.ravel(), w.ravel()
    mesh = np.meshgrid(*([x] * n), indexing="ij")
    wm = np.meshgrid(*([w] * n), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1) + c
    wts = np.prod(np.stack([m.ravel() for m in wm], axis=-1), axis=-1)
    return LPGrid(pts, wts, (x.size,) * n)


def _directions(n, m):
    return quad.sphere_rule(n, m)


def _project_block(j: int, f: TestFunction, x, lp: LPSpec, order: int):
    """P_j F and (order >= 1) its gradient, (order >= 2) Hessian at points x of R^(n+1), shape (B, n+1).

    The v' integral is polar about v = x[:n]; x may sit slightly off the paraboloid
    (offset eta = x[n] - |v|^2/2 with |eta| < 2^-j).
    """
    n = x.shape[1] - 1
    v = x[:, :n]
    eta = x[:, n] - 0.5 * np.sum(v * v, axis=-1)
    delta = 2.0**-j
    if np.any(np.abs(eta) >= delta):
        raise ValueError("points must lie within 2^-j of the paraboloid")
    om, wo = _directions(n, lp.angular_nodes)
    rb = _boundary(v, om, delta, eta)                                         # (B, O)
    t, wt = quad.gauss_legendre(0.0, 1.0, lp.radial_nodes)
    t, wt = t.ravel(), wt.ravel()
    rho = rb[..., None] * t                                                   # (B, O, T)
    vp = v[:, None, None, :] + rho[..., None] * om[None, :, None, :]          # (B, O, T, n)
    jac = rb[..., None] * wt * rho ** (n - 1) * wo[None, :, None]
    y = 2.0**j * (x[:, None, None, :] - lift(vp))                                              # (B, O, T, n+1)
    r2 = np.sum(y * y, axis=-1)
    ps, p1, p2 = profile_parts(n, lp.profile, r2)
    dens = 2.0 ** (n * j) * jac * bracket(vp) * f(vp)                         # (B, O, T)
    out = [np.einsum("bot,bot->b", dens, ps)]
    if order >= 1:
        out.append(2.0 ** (j + 1) * np.einsum("bot,bot,botm->bm", dens, p1, y))   # grad Phi = 2 psi' y
    if order >= 2:
        # Hess Phi = 2 psi' I + 4 psi'' y y^T
        hess = 4.0 * np.einsum("bot,bot,botm,botl->bml", dens, p2, y, y)
        hess += 2.0 * np.einsum("bot,bot->b", dens, p1)[:, None, None] * np.eye(n + 1)
        out.append(4.0**j * hess)
    return out


def _boundary(v, om, delta, eta):
    """rho_b with rho^2 + (eta - rho <v, w> - rho^2/2)^2 = delta^2 (increasing in rho for eta = 0)."""
    a = np.einsum("bm,om->bo", v, om)
    e = eta[:, None]
    lo = np.zeros_like(a)
    hi = np.full_like(a, delta)
    d2 = delta * delta
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        over = mid * mid + (e - mid * (a + 0.5 * mid)) ** 2 > d2
        hi = np.where(over, mid, hi)
        lo = np.where(over, lo, mid)
    return 0.5 * (lo + hi)


def project_at(j: int, f: TestFunction, x, lp: LPSpec | None = None, order: int = 0):
    """P_j F at points x of R^(n+1) near the paraboloid: list [value, gradient?, Hessian?]."""
    lp = lp or LPSpec()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if j < 0:
        raise ValueError("j must be nonnegative")
    blocks = [_project_block(j, f, x[a:a + lp.block], lp, order) for a in range(0, x.shape[0], lp.block)]
    return [np.concatenate([b[m] for b in blocks], axis=0) for m in range(order + 1)]


def project_lifted(j: int, f: TestFunction, points, lp: LPSpec | None = None, order: int = 0):
    """P_j F at the lifted points v~ of ``points`` (shape (N, n))."""
    return project_at(j, f, lift(np.atleast_2d(np.asarray(points, dtype=float))), lp, order)


def project_p(j: int, f: TestFunction, grid: LPGrid | None = None, lp: LPSpec | None = None,
              quad_spec: quad.QuadratureSpec | None = None):
    """P_j f on the grid points."""
    lp = lp or LPSpec()
    grid = grid or lp_grid(f, quad_spec or quad.QuadratureSpec(), lp)
    return project_lifted(j, f, grid.points, lp)[0]


def project_q(j: int, f: TestFunction, grid: LPGrid | None = None, lp: LPSpec | None = None,
              quad_spec: quad.QuadratureSpec | None = None):
    """Q_j f = P_j f - P_{j-1} f (Q_0 = P_0) on the grid points."""
    lp = lp or LPSpec()
    grid = grid or lp_grid(f, quad_spec or quad.QuadratureSpec(), lp)
    p = project_lifted(j, f, grid.points, lp)[0]
    if j == 0:
        return p
    return p - project_lifted(j - 1, f, grid.points, lp)[0]


def envelope(parts, i: int):
    """|grad~|^i from [value, gradient, Hessian] arrays."""
    out = np.abs(parts[0])
    if i >= 1:
        out = np.maximum(out, np.linalg.norm(parts[1], axis=-1))
    if i >= 2:
        out = np.maximum(out, np.max(np.abs(np.linalg.eigvalsh(parts[2])), axis=-1))
    return out


def q_envelope(j: int, f: TestFunction, points, i: int, lp: LPSpec):
    pj = project_lifted(j, f, points, lp, order=i)
    if j > 0:
        pm = project_lifted(j - 1, f, points, lp, order=i)
        pj = [a - b for a, b in zip(pj, pm)]
    return envelope(pj, i)


def square_terms(f: TestFunction, i: int, s: float, gamma: float, lp: LPSpec, quad_spec: quad.QuadratureSpec,
                 grid: LPGrid | None = None):
    """Per j: 2^(2(s-i)j) int ||grad~|^i Q_j f|^2 <v>^(gamma+2s) dv on the grid."""
    if i not in (0, 1, 2):
        raise ValueError("i must be 0, 1 or 2")
    grid = grid or lp_grid(f, quad_spec, lp)
    wt = grid.weights * bracket(grid.points) ** (gamma + 2.0 * s)
    terms = []
    for j in range(lp.j_max + 1):
        e = q_envelope(j, f, grid.points, i, lp)
        terms.append(2.0 ** (2.0 * (s - i) * j) * quad.tree_total(wt * e * e))
    return np.array(terms)


def square_sum(f: TestFunction, i: int, s: float, gamma: float, lp: LPSpec | None = None,
               quad_spec: quad.QuadratureSpec | None = None) -> Estimate:
    """sum_{j <= j_max} 2^(2(s-i)j) int ||grad~|^i Q_j f|^2 <v>^(gamma+2s); error from a coarser grid and rule."""
    lp = lp or LPSpec()
    quad_spec = quad_spec or quad.QuadratureSpec()
    fine = square_terms(f, i, s, gamma, lp, quad_spec).sum()
    coarse = square_terms(f, i, s, gamma, lp.coarsened(), quad_spec).sum()
    return Estimate(float(fine), float(abs(fine - coarse)))


def grid_l2_distance(a, b, grid: LPGrid) -> float:
    return float(np.sqrt(quad.tree_total(grid.weights * (np.asarray(a) - np.asarray(b)) ** 2)))
