"""Entropy production D(g, f), its split D = S + T, and the H-functional.

log f of a positive mixture is evaluated as a log-sum-exp of the
component exponents, so it stays finite where f underflows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import collision_rules as cr
from . import quadrature as quad
from .functions import LiftedGaussianMixture, Pointwise, TestFunction, bracket, lift, sqrt_of
from .kernel import KernelParams, c_prime
from .quadrature import Estimate
from .weakform import _inner_sum, _scalar, _tag, kinetic_pairing, n_g


class EntropyDomainError(ValueError):
    """f is not strictly positive where log f is needed."""


class LogOf(TestFunction):
    """log f for a mixture; raises EntropyDomainError at any point where f <= 0."""

    decays = False

    def __init__(self, f: TestFunction):
        self.f, self.n = f, f.n
        if isinstance(f, LiftedGaussianMixture):
            self.lifted = self._lifted_mixture

    def _lifted_mixture(self, x):
        f = self.f
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, x.shape[-1])
        expo = np.empty((flat.shape[0], f.amplitudes.size))
        for m, (c, b) in enumerate(zip(f.centers, f.betas)):
            d = flat - c
            d *= d
            expo[:, m] = -(d @ b)
        out, sign = logsumexp(expo, axis=-1, b=f.amplitudes, return_sign=True)
        if np.any(sign <= 0):
            raise EntropyDomainError("f is not strictly positive on the quadrature nodes")
        return out.reshape(x.shape[:-1])

    def __call__(self, v):
        if isinstance(self.f, LiftedGaussianMixture):
            return self._lifted_mixture(lift(v))
        val = self.f(v)
        if np.any(val <= 0):
            raise EntropyDomainError("f is not strictly positive on the quadrature nodes")
        return np.log(val)

    def effective_radius(self, tol=1e-16):
        return self.f.reach


def _require_positive(f: TestFunction):
    if isinstance(f, LiftedGaussianMixture) and np.all(f.amplitudes > 0):
        return
    # a coarse probe of the bulk catches sign-changing mixtures before any integration
    c, sc = f.proposal()
    rng = np.random.default_rng(0)
    probe = c + sc * rng.standard_normal((4096, f.n))
    if np.any(f(probe) <= 0):
        raise EntropyDomainError("f must be strictly positive")


def entropy_production(g: TestFunction, f: TestFunction, params: KernelParams,
                       spec: quad.QuadratureSpec) -> Estimate:
    """D(g, f) = -<Q(g, f), log f> = int int int B g_* f (log f - log f')."""
    _require_positive(f)
    L = LogOf(f)

    def integrand(b):
        return b.ev(g, "v_star") * b.ev(f, "v") * _inner_sum(b.w_in, b.ev(L, "v")[:, None] - b.ev(L, "vp"))

    return _scalar(*cr.estimate(params, g, spec, integrand, cr.reach_of(f), tag=_tag("ent-d")))


def s_part(g: TestFunction, f: TestFunction, params: KernelParams, spec: quad.QuadratureSpec) -> Estimate:
    """S(g, f) = int int int B g_* (f log(f/f') + f' - f); the integrand is pointwise >= 0."""
    _require_positive(f)
    L = LogOf(f)

    def integrand(b):
        fv = b.ev(f, "v")[:, None]
        lv = b.ev(L, "v")[:, None]
        term = fv * (lv - b.ev(L, "vp")) + b.ev(f, "vp") - fv
        return b.ev(g, "v_star") * _inner_sum(b.w_in, term)

    return _scalar(*cr.estimate(params, g, spec, integrand, cr.reach_of(f), tag=_tag("ent-s")))


def t_part_direct(g: TestFunction, f: TestFunction, params: KernelParams, spec: quad.QuadratureSpec) -> Estimate:
    """T(g, f) = -int int int B g_* (f' - f), integrated over the sphere."""
    def integrand(b):
        return -b.ev(g, "v_star") * _inner_sum(b.w_in, b.ev(f, "vp") - b.ev(f, "v")[:, None])

    return _scalar(*cr.estimate(params, g, spec, integrand, cr.reach_of(f), tag=_tag("ent-t")))


_ONE_CACHE: dict = {}


def _one(n):
    if n not in _ONE_CACHE:
        _ONE_CACHE[n] = Pointwise(lambda v: np.ones(v.shape[:-1]), n, name="one", decays=False)
    return _ONE_CACHE[n]


def t_part(g: TestFunction, f: TestFunction, params: KernelParams, spec: quad.QuadratureSpec) -> Estimate:
    """T(g, f) through the cancellation lemma: -2 C' int int f g_* |v - v_*|^gamma."""
    c = -2.0 * c_prime(params) / params.c_phi
    e = kinetic_pairing(f, g, params, spec, b=_one(f.n))
    return Estimate(c * e.value, abs(c) * e.error)


@dataclass
class EntropySplit:
    d_value: Estimate
    s_value: Estimate
    t_value: Estimate          # cancellation-lemma route
    h_value: Estimate
    t_direct: Estimate | None = None

    @property
    def split_gap(self) -> float:
        return self.d_value.value - self.s_value.value - self.t_value.value

    @property
    def split_tolerance(self) -> float:
        return float(np.sqrt(self.d_value.error**2 + self.s_value.error**2 + self.t_value.error**2))


def entropy_split(g: TestFunction, f: TestFunction, params: KernelParams, spec: quad.QuadratureSpec,
                  with_direct_t: bool = False) -> EntropySplit:
    d = entropy_production(g, f, params, spec)
    s = s_part(g, f, params, spec)
    t = t_part(g, f, params, spec)
    h = h_functional(f, spec)
    td = t_part_direct(g, f, params, spec) if with_direct_t else None
    return EntropySplit(d, s, t, h, td)


def h_functional(f: TestFunction, spec: quad.QuadratureSpec | None = None) -> Estimate:
    """H(f) = -int f log f."""
    spec = spec or quad.QuadratureSpec()
    _require_positive(f)
    L = LogOf(f)
    radius = float(spec.radius) if spec.radius is not None else cr.reach_of(f)

    def once(sp):
        pts, w = quad.rn_rule(f.n, radius, sp)
        return -quad.tree_total(w * f(pts) * L(pts))

    val = once(spec)
    return Estimate(float(val), float(abs(val - once(spec.coarsened()))))


def l1_weighted(f: TestFunction, ell: float, spec: quad.QuadratureSpec) -> float:
    """||f||_{L^1_ell} = int <v>^ell |f|."""
    radius = float(spec.radius) if spec.radius is not None else cr.reach_of(f)
    pts, w = quad.rn_rule(f.n, radius, spec)
    return float(quad.tree_total(w * bracket(pts) ** ell * np.abs(f(pts))))


def s_lower_gap(g: TestFunction, f: TestFunction, params: KernelParams, spec: quad.QuadratureSpec):
    """(S(g, f), N_g(sqrt f)); S >= N_g(sqrt f) by a log(a/b) - a + b >= (sqrt a - sqrt b)^2."""
    return s_part(g, f, params, spec), n_g(sqrt_of(f), g, params, spec)


def elementary_gap(a, b):
    """a log(a/b) - a + b - (sqrt a - sqrt b)^2, nonnegative for a, b > 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a * np.log(a / b) - a + b - (np.sqrt(a) - np.sqrt(b)) ** 2


def entropy_tables(g: TestFunction, fs, params: KernelParams, spec: quad.QuadratureSpec,
                   with_t: bool = False):
    """D(g, f) and S(g, f) for several positive f on shared nodes: ((d, d_err), (s, s_err)) arrays.

    ``with_t`` appends a third pair for D - S = T integrated directly on the
    same nodes; its error bound is that of the difference, which is smaller
    than the two separate bounds combined because D and S share nodes.
    """
    fs = list(fs)
    for f in fs:
        _require_positive(f)
    logs = [LogOf(f) for f in fs]

    def integrand(b):
        gs = b.ev(g, "v_star")
        cols = []
        for f, L in zip(fs, logs):
            fv = b.ev(f, "v")[:, None]
            dl = b.ev(L, "v")[:, None] - b.ev(L, "vp")
            cols.append(gs * _inner_sum(b.w_in, fv * dl))
            cols.append(gs * _inner_sum(b.w_in, fv * dl + b.ev(f, "vp") - fv))
            if with_t:
                cols.append(-gs * _inner_sum(b.w_in, b.ev(f, "vp") - fv))
        return np.stack(cols, axis=1)

    val, err = cr.estimate(params, g, spec, integrand, cr.reach_of(*fs), tag=_tag("ent-table"))
    m = 3 if with_t else 2
    out = tuple((val[i::m], err[i::m]) for i in range(m))
    return out


def t_table(g: TestFunction, fs, params: KernelParams, spec: quad.QuadratureSpec):
    """T(g, f) through the cancellation lemma for several f: (values, errors)."""
    fs = list(fs)
    c = -2.0 * c_prime(params) / params.c_phi
    val, err = cr.outer_integral(params, g, spec, lambda vs, v: g(vs)[:, None] * np.stack([f(v) for f in fs], 1),
                                 cr.reach_of(*fs), tag=_tag("ent-t-table"))
    return c * val, abs(c) * err
