"""Collision geometry and the non-cutoff kernel family.

Velocities are arrays whose last axis has length ``n``; every routine here
broadcasts over the leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gamma as gamma_fn
from math import pi

import numpy as np
from scipy import integrate


class GeometryError(ValueError):
    """Raised for degenerate collision geometry (zero relative velocity, off-plane points)."""


class PoleError(ValueError):
    """Raised when the angular kernel is evaluated at the grazing pole theta = 0."""


class ParameterError(ValueError):
    pass


def sphere_area(m: int) -> float:
    """Surface measure of the unit sphere S^m in R^(m+1); |S^0| = 2."""
    return 2.0 * pi ** ((m + 1) / 2.0) / gamma_fn((m + 1) / 2.0)


@dataclass(frozen=True)
class KernelParams:
    n: int
    gamma: float
    s: float
    c_phi: float = 1.0
    c_b: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ParameterError(f"dimension must be an integer >= 2, got {self.n}")
        if not self.gamma > -self.n:
            raise ParameterError(f"need gamma > -n, got gamma={self.gamma}, n={self.n}")
        if not 0.0 < self.s < 1.0:
            raise ParameterError(f"need 0 < s < 1, got {self.s}")
        if not self.c_phi > 0.0:
            raise ParameterError("c_phi must be positive")
        if not 0.0 < self.c_b <= 1.0:
            raise ParameterError("c_b must lie in (0, 1]")

    @property
    def nu(self) -> float:
        return 2.0 * self.s

    @property
    def i_exponent(self) -> int:
        return 1 if self.s < 0.5 else 2

    def kinetic(self, r):
        """Phi(|z|) = C_Phi |z|^gamma."""
        return self.c_phi * np.asarray(r, dtype=float) ** self.gamma


class CanonicalAngular:
    """b(cos t) = t^(-1-2s) sin^(2-n) t on (0, pi/2], zero beyond.

    ``density`` is the polar form sin^(n-2)(t) b(cos t), which is what every
    quadrature integrates against; for this model it is exactly t^(-1-2s),
    so the two-sided angular bound holds with c_b = 1.
    """

    theta_max = pi / 2

    def __init__(self, n: int, s: float):
        self.n = n
        self.s = s

    def density(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros_like(theta)
        ok = (theta > 0) & (theta <= self.theta_max)
        out[ok] = theta[ok] ** (-1.0 - 2.0 * self.s)
        return out

    def regular_part(self, theta):
        """density(t) * t^(1+2s); smooth and bounded on the support."""
        theta = np.asarray(theta, dtype=float)
        return np.where((theta > 0) & (theta <= self.theta_max), 1.0, 0.0)

    def b(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros_like(theta)
        ok = (theta > 0) & (theta <= self.theta_max)
        out[ok] = theta[ok] ** (-1.0 - 2.0 * self.s) * np.sin(theta[ok]) ** (2.0 - self.n)
        return out


def angular_model(params: KernelParams) -> CanonicalAngular:
    return CanonicalAngular(params.n, params.s)


@dataclass(frozen=True)
class CollisionFrame:
    v: np.ndarray
    v_star: np.ndarray
    sigma: np.ndarray
    v_prime: np.ndarray
    v_star_prime: np.ndarray
    cos_theta: np.ndarray
    theta: np.ndarray
    k_hat: np.ndarray
    rel_speed: np.ndarray

    @property
    def deviation(self):
        """|v - v'|."""
        return np.linalg.norm(self.v - self.v_prime, axis=-1)


def _angle_between(a, b):
    # 2 asin(|a-b|/2) keeps full relative precision for nearly equal unit vectors
    # and stays accurate near pi/2, unlike arccos.
    chord = np.linalg.norm(a - b, axis=-1)
    return 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))


def collide(v, v_star, sigma, tol: float = 1e-10) -> CollisionFrame:
    """Post-collisional velocities in the sigma-representation."""
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(np.abs(np.linalg.norm(sigma, axis=-1) - 1.0) > tol):
        raise GeometryError("sigma must be a unit vector")
    z = v - v_star
    r = np.linalg.norm(z, axis=-1)
    if np.any(r == 0.0):
        raise GeometryError("zero relative velocity: v == v_star")
    mid = 0.5 * (v + v_star)
    half = 0.5 * r[..., None] * sigma
    k_hat = z / r[..., None]
    vp = mid + half
    vsp = mid - half
    cos_t = np.sum(k_hat * sigma, axis=-1)
    return CollisionFrame(v, v_star, sigma, vp, vsp, cos_t, _angle_between(k_hat, sigma), k_hat, r)


def kernel_B(frame: CollisionFrame, params: KernelParams, model=None):
    """B = Phi(|v - v_*|) b(cos theta); raises PoleError at theta = 0."""
    model = model or angular_model(params)
    theta = np.asarray(frame.theta)
    if np.any(theta == 0.0):
        raise PoleError("kernel evaluated at the grazing pole theta = 0")
    return params.kinetic(frame.rel_speed) * model.b(theta)


# --- dyadic partition of unity -------------------------------------------------

def _smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, and S(t) + S(1 - t) = 1."""
    t = np.asarray(t, dtype=float)
    a = np.zeros_like(t)
    b = np.zeros_like(t)
    pos = t > 0
    a[pos] = np.exp(-1.0 / t[pos])
    neg = t < 1
    b[neg] = np.exp(-1.0 / (1.0 - t[neg]))
    return a / (a + b)


def _eta(x):
    return _smooth_step(np.asarray(x, dtype=float) + 0.5)


def dyadic_bump(x):
    """psi(x) = eta(x) - eta(x - 1); sum over m of psi(x - m) telescopes to 1.

    Supported on [-1/2, 3/2], equal to 1 near x = 1/2.
    """
    return _eta(x) - _eta(np.asarray(x, dtype=float) - 1.0)


BUMP_SUPPORT = (-0.5, 1.5)


def chi(k: int, r):
    """chi_k(r) = psi(log2(1/r) - k); carries the scale r ~ 2^-k."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    pos = r > 0
    out[pos] = dyadic_bump(-np.log2(r[pos]) - k)
    return out


def chi_support(k: int):
    """Closed interval in r containing supp chi_k."""
    return 2.0 ** (-k - BUMP_SUPPORT[1]), 2.0 ** (-k - BUMP_SUPPORT[0])


def active_indices(r):
    """Dyadic indices k with chi_k(r) possibly nonzero."""
    x = -np.log2(r)
    return range(int(np.floor(x - BUMP_SUPPORT[1])), int(np.ceil(x - BUMP_SUPPORT[0])) + 1)


def kernel_B_dyadic(frame: CollisionFrame, params: KernelParams, k: int, model=None):
    return kernel_B(frame, params, model) * chi(k, frame.deviation)


# --- Carleman kernel -------------------------------------------------------------

def carleman_cosine(v, v_star, v_prime):
    """(|v'-v_*|^2 - |v-v'|^2) / (|v-v'|^2 + |v'-v_*|^2)."""
    a = np.sum((np.asarray(v_prime) - v_star) ** 2, axis=-1)
    b = np.sum((np.asarray(v) - v_prime) ** 2, axis=-1)
    return (a - b) / (a + b)


def kernel_B_tilde(v, v_star, v_prime, params: KernelParams, model=None, tol: float = 1e-9, k=None):
    """2^(n-1) B(v - v_*, sigma) / (|v' - v_*| |v - v_*|^(n-2)) for v on the plane E.

    sigma = (2v' - v - v_*)/|2v' - v - v_*|; with ``k`` given the dyadic
    factor chi_k(|v - v'|) is included.
    """
    model = model or angular_model(params)
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    v_prime = np.asarray(v_prime, dtype=float)
    y = v_prime - v_star
    w = v - v_prime
    ny = np.linalg.norm(y, axis=-1)
    nw = np.linalg.norm(w, axis=-1)
    if np.any(ny == 0.0):
        raise GeometryError("v' coincides with v_*")
    if np.any(np.abs(np.sum(w * y, axis=-1)) > tol * np.maximum(ny * np.maximum(nw, 1.0), 1.0)):
        raise GeometryError("v is not on the Carleman plane through v' with normal v' - v_*")
    if np.any(nw == 0.0):
        raise PoleError("v = v' puts the Carleman kernel at its pole")
    rel = np.sqrt(ny**2 + nw**2)
    theta = 2.0 * np.arctan2(nw, ny)
    val = 2.0 ** (params.n - 1) * params.kinetic(rel) * model.b(theta) / (ny * rel ** (params.n - 2))
    if k is not None:
        val = val * chi(k, nw)
    return val


# --- cancellation lemma ------------------------------------------------------------

def dimensional_constant(n: int) -> float:
    """c_n = |S^(n-2)|: the azimuthal measure left after integrating out theta."""
    return sphere_area(n - 2)


def cancellation_integral(params: KernelParams, model=None) -> float:
    """int_0^(pi/2) sin^(n-2) b(cos t) [cos^-(gamma+n)(t/2) - 1] dt."""
    if not 0.0 < params.s < 1.0:
        raise ParameterError("cancellation integral diverges unless 0 < s < 1")
    model = model or angular_model(params)
    m = params.gamma + params.n

    def smooth(t):
        # integrand / t^(1-2s); the bracket behaves like m t^2 / 8 at the origin
        if t < 1e-4:
            bracket_over_t2 = m / 8.0 + m * (3.0 * m + 2.0) * t * t / 384.0
        else:
            bracket_over_t2 = np.expm1(-m * np.log(np.cos(t / 2.0))) / (t * t)
        # regular_part is zero at t = 0 exactly; the limit from the right is what is integrated
        return float(model.regular_part(np.array([max(t, 1e-300)]))[0]) * bracket_over_t2

    val, _ = integrate.quad(smooth, 0.0, model.theta_max, weight="alg", wvar=(1.0 - 2.0 * params.s, 0.0),
                            epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def c_prime(params: KernelParams, model=None) -> float:
    return 0.5 * dimensional_constant(params.n) * params.c_phi * cancellation_integral(params, model)


def cancellation_kernel_S(z_norm, params: KernelParams, model=None):
    """S(z) = C' |z|^gamma."""
    z_norm = np.asarray(z_norm, dtype=float)
    if np.any(z_norm <= 0):
        raise ParameterError("S(z) needs |z| > 0")
    return c_prime(params, model) * z_norm**params.gamma
