"""Integration backends: R^n, spheres, affine planes and co-planes.

Deterministic rules are composite Gauss rules on dyadic radial/angular
cells; the Monte Carlo backend draws from counter-based Philox streams keyed
by (seed, cell), so a run is reproducible whatever the worker count.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from math import ceil, log2, pi
from typing import Callable, NamedTuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtri, roots_jacobi
from scipy.stats import qmc

from .kernel import GeometryError, sphere_area


class Estimate(NamedTuple):
    value: float
    error: float


class NonConvergence(RuntimeError):
    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class QuadratureSpec:
    backend: str = "deterministic"
    radius: float | None = None       # R_inf; None lets callers size it from the functions
    theta_min: float = pi / 2 * 2.0**-4
    dyadic_depth: int = 6             # dyadic cells for radial singularities
    nodes_per_cell: int = 4
    radial_cells: int = 3
    angular_nodes: int = 24
    mc_samples: int = 2**16
    mc_scheme: str = "sobol"          # "sobol": independent scrambled Sobol replicates; "plain": iid draws
    mc_replicates: int = 8
    seed: int = 20240607
    rel_tol: float = 1e-6
    abs_tol: float = 1e-12
    threads: int = 1
    chunk_size: int = 4096

    def __post_init__(self):
        if self.backend not in ("deterministic", "monte-carlo"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.mc_scheme not in ("sobol", "plain"):
            raise ValueError(f"unknown mc_scheme {self.mc_scheme!r}")
        if self.mc_replicates < 2:
            raise ValueError("need at least two Monte Carlo replicates")
        if not self.theta_min > 0:
            raise ValueError("theta_min must be positive")
        if self.dyadic_depth < 1 or self.nodes_per_cell < 2 or self.radial_cells < 1:
            raise ValueError("quadrature resolution parameters too small")
        if self.angular_nodes < 4 or self.angular_nodes % 2:
            raise ValueError("angular_nodes must be an even number >= 4")

    @property
    def theta_levels(self) -> int:
        return max(1, int(ceil(log2((pi / 2) / self.theta_min))))

    @property
    def is_mc(self) -> bool:
        return self.backend == "monte-carlo"

    def refined(self, steps: int = 1) -> "QuadratureSpec":
        """``steps`` refinement doublings: each adds a node per cell, 4/3 the angles,
        halves theta_min and doubles the Monte Carlo sample count."""
        spec = self
        for _ in range(steps):
            ang = int(round(spec.angular_nodes * 4 / 3 / 2)) * 2
            spec = replace(spec, nodes_per_cell=spec.nodes_per_cell + 1, angular_nodes=ang,
                           theta_min=spec.theta_min / 2, dyadic_depth=spec.dyadic_depth + 1,
                           mc_samples=spec.mc_samples * 2)
        return spec

    def coarsened(self) -> "QuadratureSpec":
        """One step down in angular and per-cell resolution (cell counts kept)."""
        ang = max(4, int(round(self.angular_nodes / 1.5 / 2)) * 2)
        return replace(self, nodes_per_cell=max(2, self.nodes_per_cell - 1), angular_nodes=ang,
                       theta_min=min(pi / 2, self.theta_min * 2), dyadic_depth=max(1, self.dyadic_depth - 1),
                       mc_samples=max(64, self.mc_samples // 2))


# --- one-dimensional rules ------------------------------------------------------

@lru_cache(maxsize=None)
def _legendre(p: int):
    x, w = leggauss(p)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(a, b, p: int):
    x, w = _legendre(p)
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


@lru_cache(maxsize=None)
def jacobi_rule(alpha: float, p: int):
    """Nodes/weights on [0, 1] for int_0^1 t^alpha G(t) dt."""
    x, w = roots_jacobi(p, 0.0, alpha)
    t = 0.5 * (1.0 + x)
    w = w * 0.5 ** (1.0 + alpha)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def power_rule(alpha: float, length: float, levels: int, p: int):
    """Composite rule for int_0^L t^alpha G(t) dt with G smooth.

    Dyadic cells [L 2^-(m+1), L 2^-m] get Gauss-Legendre times t^alpha; the
    innermost cell [0, L 2^-levels] gets Gauss-Jacobi for the weight.
    """
    nodes, weights = [], []
    for m in range(levels):
        a, b = length * 2.0 ** (-m - 1), length * 2.0**-m
        x, w = gauss_legendre(a, b, p)
        nodes.append(x)
        weights.append(w * x**alpha)
    h = length * 2.0**-levels
    t, w = jacobi_rule(float(alpha), p)
    nodes.append(h * t)
    weights.append(w * h ** (1.0 + alpha))
    return np.concatenate(nodes), np.concatenate(weights)


@lru_cache(maxsize=None)
def theta_rule(s: float, levels: int, p: int, theta_max: float = pi / 2):
    """Rule for int_0^theta_max t^(-1-2s) F(t) dt, exact in the limit for F even, F(0) = 0.

    In the innermost cell u = t^2 turns the integral into
    (1/2) int u^(-s) [F(sqrt u)/u] du, and F(sqrt u)/u is smooth for even F.
    """
    nodes, weights = [], []
    for m in range(levels):
        a, b = theta_max * 2.0 ** (-m - 1), theta_max * 2.0**-m
        x, w = gauss_legendre(a, b, p)
        nodes.append(x)
        weights.append(w * x ** (-1.0 - 2.0 * s))
    top = (theta_max * 2.0**-levels) ** 2
    u, w = jacobi_rule(-float(s), p)
    u = top * u
    w = w * top ** (1.0 - s)
    nodes.append(np.sqrt(u))
    weights.append(0.5 * w / u)
    th, wt = np.concatenate(nodes), np.concatenate(weights)
    th.setflags(write=False)
    wt.setflags(write=False)
    return th, wt


def radial_rule(alpha: float, radius: float, cells: int, p: int):
    """int_0^R r^alpha G(r) dr: Jacobi in the first cell, Legendre elsewhere."""
    edges = np.linspace(0.0, radius, cells + 1)
    t, w = jacobi_rule(float(alpha), p)
    h = edges[1]
    nodes, weights = [h * t], [w * h ** (1.0 + alpha)]
    if cells > 1:
        x, ww = gauss_legendre(edges[1:-1], edges[2:], p)
        nodes.append(x.ravel())
        weights.append((ww * x**alpha).ravel())
    return np.concatenate(nodes), np.concatenate(weights)


# --- directions -------------------------------------------------------------------

def sphere_rule(n: int, m: int):
    """Direction nodes on S^(n-1) with weights summing to |S^(n-1)|.

    n = 2: m equispaced angles; n = 3: Gauss-Legendre in cos(polar) times m
    azimuths.  Both are antipodally symmetric for even m.
    """
    if n == 2:
        ph = 2.0 * pi * (np.arange(m) + 0.5) / m
        return np.stack([np.cos(ph), np.sin(ph)], axis=-1), np.full(m, 2.0 * pi / m)
    if n == 3:
        c, wc = _legendre(max(2, m // 2))
        ph = 2.0 * pi * (np.arange(m) + 0.5) / m
        sn = np.sqrt(1.0 - c**2)
        pts = np.stack([sn[:, None] * np.cos(ph)[None, :], sn[:, None] * np.sin(ph)[None, :],
                        np.broadcast_to(c[:, None], (c.size, m))], axis=-1).reshape(-1, 3)
        w = (wc[:, None] * np.full(m, 2.0 * pi / m)[None, :]).ravel()
        return pts, w
    raise NotImplementedError("deterministic direction rules exist for n in {2, 3} only")


def azimuth_rule(n: int, m: int):
    """Unit vectors of S^(n-2) and weights summing to |S^(n-2)| (antipodal pairs)."""
    if n == 2:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if n == 3:
        ph = 2.0 * pi * np.arange(m) / m
        return np.stack([np.cos(ph), np.sin(ph)], axis=-1), np.full(m, 2.0 * pi / m)
    raise NotImplementedError("azimuth rules exist for n in {2, 3} only")


def orthonormal_frame(k):
    """For unit vectors k (..., n) return (..., n-1, n) spanning the complement of k."""
    k = np.asarray(k, dtype=float)
    n = k.shape[-1]
    if n == 2:
        return np.stack([-k[..., 1], k[..., 0]], axis=-1)[..., None, :]
    if n == 3:
        # branch-free orthonormal basis (Duff et al. 2017)
        sgn = np.where(k[..., 2] >= 0, 1.0, -1.0)
        a = -1.0 / (sgn + k[..., 2])
        b = k[..., 0] * k[..., 1] * a
        e1 = np.stack([1.0 + sgn * k[..., 0] ** 2 * a, sgn * b, -sgn * k[..., 0]], axis=-1)
        e2 = np.stack([b, sgn + k[..., 1] ** 2 * a, -k[..., 1]], axis=-1)
        return np.stack([e1, e2], axis=-2)
    q = np.linalg.qr(np.concatenate([k[..., None], np.eye(n)[:, : n - 1]], axis=-1))[0]
    return np.swapaxes(q[..., 1:], -1, -2)


# --- reduction and parallel plumbing -----------------------------------------------

def pairwise_sum(values):
    """Tree reduction along axis 0 in a fixed order."""
    vals = [np.asarray(v, dtype=float) for v in values]
    if not vals:
        return 0.0
    while len(vals) > 1:
        nxt = [vals[i] + vals[i + 1] for i in range(0, len(vals) - 1, 2)]
        if len(vals) % 2:
            nxt.append(vals[-1])
        vals = nxt
    return vals[0]


def tree_total(values, block: int = 4096) -> float:
    """Sum of a flat array through fixed-size blocks and a pairwise tree."""
    values = np.asarray(values, dtype=float).ravel()
    return float(pairwise_sum([values[i:i + block].sum() for i in range(0, values.size, block)]))


def map_chunks(fn: Callable, n_items: int, spec: QuadratureSpec):
    """Apply fn(chunk_index, start, stop) over a fixed partition; results in order."""
    size = max(1, spec.chunk_size)
    bounds = [(i, a, min(a + size, n_items)) for i, a in enumerate(range(0, n_items, size))]
    if spec.threads <= 1 or len(bounds) <= 1:
        return [fn(*b) for b in bounds]
    with ThreadPoolExecutor(max_workers=spec.threads) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def uniforms(rng: np.random.Generator, count: int, dim: int, scheme: str, start: int = 0) -> np.ndarray:
    """(count, dim) points in (0, 1): points start..start+count of one scrambled Sobol
    sequence seeded by ``rng``, or iid uniforms."""
    if scheme == "plain":
        return rng.random((count, dim))
    sob = qmc.Sobol(dim, scramble=True, seed=rng)
    if start:
        sob.fast_forward(start)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        u = sob.random(count)
    return np.clip(u, 1e-16, 1.0 - 1e-16)


def mc_map(fn: Callable, spec: QuadratureSpec, total: int | None = None):
    """Mean and standard error of a Monte Carlo sum.

    ``fn(block, start, count)`` returns (sum, sum of squares, count) for samples
    start..start+count of block ``block``.  Plain: blocks are independent
    chunks.  Sobol: the samples split into ``mc_replicates`` scrambled
    sequences, each walked in chunks; the error comes from the spread of the
    replicate means.  The layout depends only on the QuadratureSpec, never on threads.
    """
    total = int(total or spec.mc_samples)
    if spec.mc_scheme == "plain":
        return mc_estimate(map_chunks(lambda i, a, b: fn(i, 0, b - a), total, spec))
    reps = spec.mc_replicates
    per = -(-total // reps)
    size = max(1, spec.chunk_size)
    tasks = [(r, a, min(size, per - a)) for r in range(reps) for a in range(0, per, size)]
    if spec.threads <= 1 or len(tasks) <= 1:
        out = [fn(*t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=spec.threads) as pool:
            out = list(pool.map(lambda t: fn(*t), tasks))
    stats = []
    for r in range(reps):
        mine = [o for t, o in zip(tasks, out) if t[0] == r]
        stats.append((pairwise_sum([m[0] for m in mine]), pairwise_sum([m[1] for m in mine]),
                      sum(int(m[2]) for m in mine)))
    return mc_estimate(stats, replicates=True)


def mc_estimate(chunk_stats, replicates: bool = False):
    """Combine per-chunk (sum, sum of squares, count) into mean and standard error.

    With ``replicates`` every chunk is an independent randomized-QMC replicate
    and the error is the spread of the chunk means.
    """
    if replicates and len(chunk_stats) >= 2:
        cnt = np.array([float(c[2]) for c in chunk_stats])
        means = np.stack([np.asarray(c[0], dtype=float) / float(c[2]) for c in chunk_stats])
        w = cnt / cnt.sum()
        mean = pairwise_sum([wi * m for wi, m in zip(w, means)])
        var = pairwise_sum([wi * (m - mean) ** 2 for wi, m in zip(w, means)]) / (len(chunk_stats) - 1)
        return mean, np.sqrt(var)
    tot = pairwise_sum([c[0] for c in chunk_stats])
    sq = pairwise_sum([c[1] for c in chunk_stats])
    cnt = sum(int(c[2]) for c in chunk_stats)
    mean = tot / cnt
    var = np.maximum(sq / cnt - mean**2, 0.0)
    return mean, np.sqrt(var / max(cnt - 1, 1))


# --- R^n ----------------------------------------------------------------------------

def rn_rule(n: int, radius: float, spec: QuadratureSpec, alpha_extra: float = 0.0, center=None):
    """Polar product rule on the ball of given radius: points (N, n), weights (N,).

    ``alpha_extra`` folds a radial power |x - center|^alpha_extra into the weights.
    """
    r, wr = radial_rule(n - 1 + alpha_extra, radius, spec.radial_cells, spec.nodes_per_cell * 2)
    dirs, wd = sphere_rule(n, spec.angular_nodes)
    pts = (r[:, None, None] * dirs[None, :, :]).reshape(-1, n)
    w = (wr[:, None] * wd[None, :]).ravel()
    if center is not None:
        pts = pts + np.asarray(center, dtype=float)
    return pts, w


def _default_radius(spec: QuadratureSpec, fallback: float = 8.0) -> float:
    return float(spec.radius) if spec.radius is not None else fallback


def integrate_rn(integrand: Callable, n: int, spec: QuadratureSpec, center=None, scale: float = 1.0) -> Estimate:
    """int_{R^n} integrand(v) dv.

    Deterministic: polar Gauss rule on the ball of radius R_inf around
    ``center``; the error bound is the gap to the next-coarser rule.
    Monte Carlo: Gaussian proposal of standard deviation ``scale``.
    """
    if spec.is_mc:
        return _integrate_rn_mc(integrand, n, spec, center, scale)
    radius = _default_radius(spec)

    def run(sp):
        pts, w = rn_rule(n, radius, sp, center=center)
        vals = np.asarray(integrand(pts), dtype=float)
        return tree_total(w * vals)

    fine = run(spec)
    coarse = run(spec.coarsened())
    return Estimate(fine, abs(fine - coarse))


def _integrate_rn_mc(integrand, n, spec, center, scale):
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    norm = (2.0 * pi * scale**2) ** (n / 2.0)

    def chunk(i, start, count):
        rng = stream(spec.seed, 1, i)
        x = ndtri(uniforms(rng, count, n, spec.mc_scheme, start)) * scale
        vals = np.asarray(integrand(x + c), dtype=float) * norm * np.exp(0.5 * np.sum(x**2, axis=-1) / scale**2)
        return vals.sum(), (vals**2).sum(), count

    mean, se = mc_map(chunk, spec)
    return Estimate(float(mean), float(se))


def integrate_sphere(integrand: Callable, n: int, spec: QuadratureSpec) -> Estimate:
    if spec.is_mc:
        def chunk(i, start, count):
            rng = stream(spec.seed, 2, i)
            x = ndtri(uniforms(rng, count, n, spec.mc_scheme, start))
            x /= np.linalg.norm(x, axis=-1, keepdims=True)
            vals = np.asarray(integrand(x), dtype=float) * sphere_area(n - 1)
            return vals.sum(), (vals**2).sum(), count

        mean, se = mc_map(chunk, spec)
        return Estimate(float(mean), float(se))

    def run(m):
        d, w = sphere_rule(n, m)
        return tree_total(w * np.asarray(integrand(d), dtype=float))

    fine = run(spec.angular_nodes)
    coarse = run(spec.coarsened().angular_nodes)
    return Estimate(fine, abs(fine - coarse))


# --- planes and co-planes ------------------------------------------------------------

def _complement_basis(normals):
    """Orthonormal basis (rows) of the orthogonal complement of the given normals."""
    normals = np.atleast_2d(np.asarray(normals, dtype=float))
    n = normals.shape[1]
    _, sv, vt = np.linalg.svd(normals)
    rank = int(np.sum(sv > 1e-12 * max(sv.max(), 1.0)))
    if rank < normals.shape[0]:
        raise GeometryError("normals are linearly dependent")
    return vt[rank:n]


def _affine_integral(origin, basis, integrand, spec, radius):
    m = basis.shape[0]
    if m == 0:
        return float(np.asarray(integrand(origin[None, :]), dtype=float)[0]), 0.0

    def run(sp):
        if m == 1:
            edges = np.linspace(-radius, radius, 2 * sp.radial_cells + 1)
            t, w = gauss_legendre(edges[:-1], edges[1:], sp.nodes_per_cell * 2)
            coords, w = t.reshape(-1, 1), w.ravel()
        else:
            coords, w = rn_rule(m, radius, sp)
        pts = origin[None, :] + coords @ basis
        return tree_total(w * np.asarray(integrand(pts), dtype=float))

    fine = run(spec)
    return fine, abs(fine - run(spec.coarsened()))


def integrate_plane(point, normal, integrand: Callable, spec: QuadratureSpec, radius: float | None = None) -> Estimate:
    """Lebesgue integral over the hyperplane through ``point`` orthogonal to ``normal``."""
    point = np.asarray(point, dtype=float)
    normal = np.asarray(normal, dtype=float)
    if not np.linalg.norm(normal) > 0:
        raise GeometryError("plane normal must be nonzero")
    basis = _complement_basis(normal[None, :])
    val, err = _affine_integral(point, basis, integrand, spec, radius or _default_radius(spec))
    return Estimate(val, err)


def gram_determinant(u, u_bar):
    u = np.asarray(u, dtype=float)
    u_bar = np.asarray(u_bar, dtype=float)
    d = np.sum(u * u, -1) * np.sum(u_bar * u_bar, -1) - np.sum(u * u_bar, -1) ** 2
    return np.maximum(d, 0.0)


def coplane_point(point1, normal1, point2, normal2):
    """Minimum-norm point of {x : <x - p1, n1> = 0, <x - p2, n2> = 0}."""
    a = np.stack([normal1, normal2])
    rhs = np.array([np.dot(normal1, point1), np.dot(normal2, point2)])
    return np.linalg.lstsq(a, rhs, rcond=None)[0]


def integrate_coplane(point1, normal1, point2, normal2, integrand: Callable, spec: QuadratureSpec,
                      radius: float | None = None, tol: float = 1e-12) -> Estimate:
    """Lebesgue integral over the codimension-2 intersection of two hyperplanes."""
    n1 = np.asarray(normal1, dtype=float)
    n2 = np.asarray(normal2, dtype=float)
    if gram_determinant(n1, n2) <= tol * max(np.dot(n1, n1) * np.dot(n2, n2), 1e-300):
        raise GeometryError("co-plane normals are parallel")
    origin = coplane_point(point1, n1, point2, n2)
    basis = _complement_basis(np.stack([n1, n2]))
    val, err = _affine_integral(origin, basis, integrand, spec, radius or _default_radius(spec))
    return Estimate(val, err)
