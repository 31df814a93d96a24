"""The standard 12-mixture test family, defined in any dimension n >= 2.

Centers use the first two velocity coordinates (and the lifted one for
'lifted'); remaining coordinates are zero.
"""

from __future__ import annotations

import numpy as np

from ..functions import LiftedGaussianMixture, mixture

# (name, [(amplitude, center in (x1, x2, lifted), beta)]) with beta scalar or (b1, b2, b_rest, b_lifted)
_TABLE = [
    ("unit", [(1.0, (0.0, 0.0, 0.0), 0.5)]),
    ("narrow", [(1.0, (0.0, 0.0, 0.0), 2.0)]),
    ("wide", [(1.0, (0.0, 0.0, 0.0), 0.15)]),
    ("offset", [(1.0, (0.8, 0.0, 0.0), 0.5)]),
    ("lifted", [(1.0, (0.0, 0.0, 0.6), (0.5, 0.5, 0.5, 1.0))]),
    ("pair", [(1.0, (-0.7, 0.0, 0.0), 0.8), (0.6, (0.7, 0.3, 0.0), 0.8)]),
    ("dipole", [(1.0, (0.4, 0.0, 0.0), 0.9), (-1.0, (-0.4, 0.0, 0.0), 0.9)]),
    ("aniso", [(1.0, (0.0, 0.0, 0.0), (1.5, 0.3, 0.5, 0.0))]),
    ("far", [(0.5, (-1.5, 1.0, 0.0), 0.6)]),
    ("triple", [(0.7, (0.0, 0.8, 0.0), 1.0), (0.7, (0.7, -0.4, 0.0), 1.0), (0.7, (-0.7, -0.4, 0.0), 1.0)]),
    ("hat", [(1.0, (0.0, 0.0, 0.0), 0.4), (-0.8, (0.0, 0.0, 0.0), 1.2)]),
    ("negative", [(-1.0, (0.3, -0.5, 0.0), 0.7)]),
]

NAMES = tuple(name for name, _ in _TABLE)
POSITIVE = tuple(name for name, comps in _TABLE if all(a > 0 for a, _, _ in comps))


def _center(n, c):
    out = np.zeros(n + 1)
    out[0], out[1], out[n] = c
    return out


def _beta(n, b):
    if np.isscalar(b):
        return np.full(n + 1, float(b))
    b1, b2, rest, lifted = b
    out = np.full(n + 1, float(rest))
    out[0], out[1], out[n] = b1, b2, lifted
    return out


def member(name: str, n: int) -> LiftedGaussianMixture:
    for nm, comps in _TABLE:
        if nm == name:
            return mixture([(a, _center(n, c), _beta(n, b)) for a, c, b in comps], name=nm)
    raise KeyError(f"no family member named {name!r}")


def standard_family(n: int) -> dict:
    """name -> mixture, in the fixed family order."""
    return {name: member(name, n) for name in NAMES}


def positive_family(n: int) -> dict:
    return {name: member(name, n) for name in POSITIVE}


def width_sweep(n: int, betas=(0.15, 0.3, 0.5, 0.8, 1.2, 2.0)) -> dict:
    """Centered Gaussians of several widths."""
    return {f"width{b:g}": mixture([(1.0, np.zeros(n + 1), b)], name=f"width{b:g}") for b in betas}


# an off-center Gaussian and a two-bump partner: the fixed (f, h) used by the
# dyadic-slope and duality identities
_PROBES = {
    "probe": [(1.0, (0.3, 0.1, 0.0), 0.5)],
    "partner": [(1.0, (-0.2, 0.4, 0.0), 0.7), (0.5, (0.5, 0.0, 0.0), 1.0)],
}


def probe_pair(n: int) -> dict:
    return {nm: mixture([(a, _center(n, c), _beta(n, b)) for a, c, b in comps], name=nm)
            for nm, comps in _PROBES.items()}
