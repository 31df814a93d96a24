"""Anisotropic distance, weighted Lebesgue norms, N^{s,gamma} and isotropic H^s.

Double integrals are written as int dv int_{S^(n-1)} d omega int_0^rho_max
d rho over v' = v + rho omega.  Near the diagonal the integrand behaves
like rho^(1-2s) times a smooth function, so the rho integral is a single
Gauss-Jacobi rule on [0, rho_max]; rho_max is where the cutoff
d(v, v') = 1 (or |v - v'| = 1) is met.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quadrature as quad
from .collision_rules import reach_of
from .functions import TestFunction, bracket
from .kernel import KernelParams
from .quadrature import Estimate, NonConvergence


def aniso_dist(v, v_prime):
    """d(v, v') = sqrt(|v - v'|^2 + (|v|^2 - |v'|^2)^2 / 4), the distance of the lifted points."""
    v = np.asarray(v, dtype=float)
    vp = np.asarray(v_prime, dtype=float)
    a = np.sum((v - vp) ** 2, axis=-1)
    b = 0.5 * (np.sum(v * v, axis=-1) - np.sum(vp * vp, axis=-1))
    return np.sqrt(a + b * b)


@dataclass(frozen=True)
class WeightedNormSpec:
    p: float = 2.0
    ell: float = 0.0

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError("p must be at least 1")


@dataclass(frozen=True)
class SeminormSpec:
    s: float
    gamma: float

    @classmethod
    def from_params(cls, params: KernelParams) -> "SeminormSpec":
        return cls(params.s, params.gamma)

    @property
    def weight_exponent(self) -> float:
        return 0.5 * (self.gamma + 2.0 * self.s + 1.0)


def _check(est: Estimate, spec: quad.QuadratureSpec, strict: bool) -> Estimate:
    if strict and est.error > max(spec.abs_tol, spec.rel_tol * abs(est.value)):
        raise NonConvergence("quadrature did not reach the requested tolerance", est)
    return est


def _radius(spec, *fs):
    return float(spec.radius) if spec.radius is not None else reach_of(*fs)


def _lp_table_sq(fs, p, ell, spec):
    """int <v>^ell |f|^p for each f (p-th powers)."""
    radius = _radius(spec, *fs)

    def once(sp):
        pts, w = quad.rn_rule(fs[0].n, radius, sp)
        wt = w * bracket(pts) ** ell
        return np.array([quad.tree_total(wt * np.abs(f(pts)) ** p) for f in fs])

    val = once(spec)
    return val, np.abs(val - once(spec.coarsened()))


def weighted_lp(f: TestFunction, spec: WeightedNormSpec, quad_spec: quad.QuadratureSpec | None = None,
                strict: bool = False) -> Estimate:
    """(int <v>^ell |f|^p dv)^(1/p)."""
    quad_spec = quad_spec or quad.QuadratureSpec()
    val, err = _lp_table_sq([f], spec.p, spec.ell, quad_spec)
    v = max(val[0], 0.0) ** (1.0 / spec.p)
    # first-order propagation of the error of the p-th power
    e = err[0] / (spec.p * max(v, 1e-300) ** (spec.p - 1.0)) if v > 0 else err[0] ** (1.0 / spec.p)
    return _check(Estimate(v, float(e)), quad_spec, strict)


def weighted_l2_sq_table(fs, ell: float, quad_spec: quad.QuadratureSpec):
    return _lp_table_sq(list(fs), 2.0, ell, quad_spec)


# --- singular double integrals --------------------------------------------------------------

def rho_max_aniso(v, omega, iters: int = 60):
    """rho with rho^2 (1 + (<v, omega> + rho/2)^2) = 1; the left side increases on [0, 1]."""
    a = np.sum(v * omega, axis=-1)
    lo = np.zeros_like(a)
    hi = np.ones_like(a)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        over = mid * mid * (1.0 + (a + 0.5 * mid) ** 2) > 1.0
        hi = np.where(over, mid, hi)
        lo = np.where(over, lo, mid)
    return 0.5 * (lo + hi)


def _double_table(fs, s: float, spec: quad.QuadratureSpec, kind: str, weight_exp: float, block: int = 256):
    """int dv int dv' W (f(v') - f(v))^2 / dist^(n+2s) over dist <= 1.

    kind 'aniso': dist = d(v, v'), W = (<v><v'>)^weight_exp.
    kind 'iso': dist = |v - v'|, W = <v>^weight_exp.
    """
    fs = list(fs)
    n = fs[0].n
    radius = _radius(spec, *fs) + 1.0
    pts, wv = quad.rn_rule(n, radius, spec)
    om, wo = quad.sphere_rule(n, spec.angular_nodes)
    t, wt = quad.jacobi_rule(1.0 - 2.0 * s, 3 * spec.nodes_per_cell)
    t, wt = np.asarray(t), np.asarray(wt)
    parts = []
    for a in range(0, pts.shape[0], block):
        v = pts[a:a + block]
        vv = v[:, None, :]
        if kind == "aniso":
            rmax = rho_max_aniso(vv, om[None, :, :])
        else:
            rmax = np.ones((v.shape[0], om.shape[0]))
        rho = rmax[..., None] * t                                              # (B, O, T)
        vp = vv[:, :, None, :] + rho[..., None] * om[None, :, None, :]          # (B, O, T, n)
        dist = aniso_dist(vv[:, :, None, :], vp) if kind == "aniso" else rho
        # rho^(n-1) d rho with the rho^(1-2s) Jacobi weight factored out
        jac = rmax[..., None] ** (2.0 - 2.0 * s) * wt * rho ** (n - 2 + 2 * s) / dist ** (n + 2 * s)
        if kind == "aniso":
            jac = jac * (bracket(v)[:, None, None] * bracket(vp)) ** weight_exp
        else:
            jac = jac * bracket(v)[:, None, None] ** weight_exp
        w = wv[a:a + block, None, None] * wo[None, :, None] * jac
        parts.append(np.array([np.sum(w * (f(vp) - f(v)[:, None, None]) ** 2) for f in fs]))
    return quad.pairwise_sum(parts)


def _double_est(fs, s, spec, kind, weight_exp):
    val = _double_table(fs, s, spec, kind, weight_exp)
    return val, np.abs(val - _double_table(fs, s, spec.coarsened(), kind, weight_exp))


def seminorm_table_sq(fs, spec: SeminormSpec, quad_spec: quad.QuadratureSpec):
    """|f|^2 in the dotted N^{s,gamma} semi-norm for each f, on shared nodes."""
    return _double_est(fs, spec.s, quad_spec, "aniso", spec.weight_exponent)


def seminorm_dot_n_sq(f, spec: SeminormSpec, quad_spec: quad.QuadratureSpec | None = None,
                      strict: bool = False) -> Estimate:
    quad_spec = quad_spec or quad.QuadratureSpec()
    val, err = seminorm_table_sq([f], spec, quad_spec)
    return _check(Estimate(float(val[0]), float(err[0])), quad_spec, strict)


def seminorm_dot_n(f, spec: SeminormSpec, quad_spec: quad.QuadratureSpec | None = None,
                   strict: bool = False) -> Estimate:
    sq = seminorm_dot_n_sq(f, spec, quad_spec, strict)
    return _sqrt_est(sq)


def _sqrt_est(sq: Estimate) -> Estimate:
    v = np.sqrt(max(sq.value, 0.0))
    return Estimate(float(v), float(sq.error / (2.0 * v)) if v > 0 else float(np.sqrt(sq.error)))


@dataclass
class NormParts:
    lebesgue_sq: Estimate      # |f|^2 in L^2_{gamma+2s}
    seminorm_sq: Estimate      # dotted part
    total: Estimate            # |f|_N

    @property
    def total_sq(self) -> float:
        return self.lebesgue_sq.value + self.seminorm_sq.value


def norm_n_table(fs, spec: SeminormSpec, quad_spec: quad.QuadratureSpec):
    fs = list(fs)
    lv, le = weighted_l2_sq_table(fs, spec.gamma + 2.0 * spec.s, quad_spec)
    sv, se = seminorm_table_sq(fs, spec, quad_spec)
    out = []
    for i in range(len(fs)):
        tot = Estimate(float(lv[i] + sv[i]), float(np.hypot(le[i], se[i])))
        out.append(NormParts(Estimate(float(lv[i]), float(le[i])), Estimate(float(sv[i]), float(se[i])),
                             _sqrt_est(tot)))
    return out


def norm_n_full(f, spec: SeminormSpec, quad_spec: quad.QuadratureSpec | None = None) -> NormParts:
    """|f|_N with |f|_N^2 = |f|^2_{L^2_{gamma+2s}} + |f|^2_{dotted N}."""
    return norm_n_table([f], spec, quad_spec or quad.QuadratureSpec())[0]


def iso_sobolev_table_sq(fs, s: float, ell: float, quad_spec: quad.QuadratureSpec):
    """Squared Gagliardo-form H^s_ell norms: L^2_ell part plus the |v - v'| <= 1 difference part."""
    fs = list(fs)
    lv, le = weighted_l2_sq_table(fs, ell, quad_spec)
    dv, de = _double_est(fs, s, quad_spec, "iso", ell)
    return lv + dv, np.hypot(le, de)


def iso_sobolev(f, s: float, ell: float, quad_spec: quad.QuadratureSpec | None = None) -> Estimate:
    if not 0.0 < s < 1.0:
        raise ValueError("need 0 < s < 1")
    v, e = iso_sobolev_table_sq([f], s, ell, quad_spec or quad.QuadratureSpec())
    return _sqrt_est(Estimate(float(v[0]), float(e[0])))
