"""Scenario files: TOML with sections [kernel], [functions.*], [quadrature], [assumptions], [checks].

Unknown sections or keys raise ConfigError.  The schema is documented in
README.md; ``SCHEMA`` below is the authoritative list of keys.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .. import quadrature as quad
from ..functions import BallIndicator, LiftedGaussianMixture, MaxwellianParams, TestFunction, Truncated, maxwellian, mixture
from ..kernel import KernelParams
from . import family

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


CHECK_NAMES = ("upper", "lower", "entropy", "identities")
IDENTITY_GROUPS = ("geometry", "metric", "cancellation", "prepost", "duality", "invariants",
                   "annihilation", "equilibrium", "dyadic", "sandwich", "coplane")

KERNEL_KEYS = {"n", "gamma", "s", "c_phi", "c_b"}
QUAD_KEYS = {f.name for f in fields(quad.QuadratureSpec)}
ASSUMPTION_KEYS = {"R", "delta"}
CHECK_KEYS = {
    "run", "g", "family", "f", "h", "entropy_f", "refine", "include_family",
    "dyadic_ks", "duality_ks", "coplane", "coplane_samples", "metric_samples", "geometry_samples",
    "triples", "annihilation_h", "identity_groups", "dyadic_f", "dyadic_h", "invariant_f",
}
FUNCTION_KEYS = {
    "mixture": {"kind", "components"},
    "maxwellian": {"kind", "rho", "u", "temp"},
    "ball": {"kind", "radius", "height"},
    "truncated": {"kind", "base", "radius"},
    "family": {"kind", "member"},
}
COMPONENT_KEYS = {"amplitude", "center", "beta"}

SCHEMA = {
    "kernel": KERNEL_KEYS,
    "quadrature": QUAD_KEYS,
    "assumptions": ASSUMPTION_KEYS,
    "checks": CHECK_KEYS,
    "functions": FUNCTION_KEYS,
}


@dataclass
class Checks:
    run: tuple = CHECK_NAMES
    g: str = "g"
    family: str = "standard"                 # "standard" adds the 12 mixtures; "none" adds nothing
    f: tuple = ()                            # default: first six family members
    h: tuple = ()                            # default: last six family members
    entropy_f: tuple = ()                    # default: first six positive members
    refine: int = 1
    include_family: bool = True
    dyadic_ks: tuple = (0, 1, 2, 3, 4, 5)
    duality_ks: tuple = (0, 1, 2)
    coplane: bool = False
    coplane_samples: int = 10_000_000
    metric_samples: int = 10_000
    geometry_samples: int = 10_000
    triples: int = 4
    annihilation_h: int = 5
    identity_groups: tuple = IDENTITY_GROUPS
    dyadic_f: str = "probe"
    dyadic_h: str = "partner"
    invariant_f: tuple = ("probe", "partner")


@dataclass
class Scenario:
    params: KernelParams
    functions: dict
    quad: quad.QuadratureSpec
    R: float
    delta: float
    checks: Checks
    source: str = ""

    def function(self, name: str) -> TestFunction:
        try:
            return self.functions[name]
        except KeyError:
            raise ConfigError(f"function {name!r} is not defined") from None

    @property
    def g(self) -> TestFunction:
        return self.function(self.checks.g)

    def f_list(self):
        return [(nm, self.function(nm)) for nm in self.checks.f]

    def h_list(self):
        return [(nm, self.function(nm)) for nm in self.checks.h]

    def family_list(self):
        return [(nm, self.function(nm)) for nm in family.NAMES if nm in self.functions]

    def entropy_list(self):
        return [(nm, self.function(nm)) for nm in self.checks.entropy_f]

    def with_overrides(self, seed=None, threads=None) -> "Scenario":
        q = self.quad
        if seed is not None:
            q = replace(q, seed=int(seed))
        if threads is not None:
            q = replace(q, threads=int(threads))
        return replace(self, quad=q)


def _reject_unknown(section: str, got: dict, allowed: set):
    extra = sorted(set(got) - set(allowed))
    if extra:
        raise ConfigError(f"unknown keys in [{section}]: {', '.join(extra)}")


def _component(n, comp, where):
    if not isinstance(comp, dict):
        raise ConfigError(f"{where}: components must be tables")
    _reject_unknown(where, comp, COMPONENT_KEYS)
    try:
        a = float(comp["amplitude"])
        c = np.asarray(comp["center"], dtype=float)
    except KeyError as e:
        raise ConfigError(f"{where}: missing {e.args[0]!r}") from None
    if c.size == n:
        c = np.r_[c, 0.0]
    if c.size != n + 1:
        raise ConfigError(f"{where}: center needs n or n+1 entries")
    b = np.asarray(comp.get("beta", 0.5), dtype=float)
    if b.ndim == 0:
        b = np.full(n + 1, float(b))
    elif b.size == n:
        b = np.r_[b, 0.0]
    elif b.size != n + 1:
        raise ConfigError(f"{where}: beta needs 1, n or n+1 entries")
    return a, c, b


def build_function(name: str, spec: dict, n: int, table: dict) -> TestFunction:
    where = f"functions.{name}"
    kind = spec.get("kind", "mixture")
    if kind not in FUNCTION_KEYS:
        raise ConfigError(f"{where}: unknown kind {kind!r}")
    _reject_unknown(where, spec, FUNCTION_KEYS[kind])
    if kind == "mixture":
        comps = spec.get("components")
        if not comps:
            raise ConfigError(f"{where}: a mixture needs components")
        return mixture([_component(n, c, where) for c in comps], name=name)
    if kind == "maxwellian":
        u = tuple(float(x) for x in spec.get("u", [0.0] * n))
        if len(u) != n:
            raise ConfigError(f"{where}: u needs n entries")
        return maxwellian(MaxwellianParams(float(spec.get("rho", 1.0)), u, float(spec.get("temp", 1.0))))
    if kind == "ball":
        return BallIndicator(n, float(spec.get("radius", 1.0)), float(spec.get("height", 1.0)))
    if kind == "family":
        return family.member(str(spec["member"]), n)
    base = spec.get("base")
    if base not in table:
        raise ConfigError(f"{where}: base {base!r} must be defined before it is truncated")
    return Truncated(table[base], float(spec["radius"]))


def parse(data: dict, source: str = "") -> Scenario:
    _reject_unknown("top level", data, set(SCHEMA))
    kern = data.get("kernel")
    if kern is None:
        raise ConfigError("[kernel] is required")
    _reject_unknown("kernel", kern, KERNEL_KEYS)
    try:
        params = KernelParams(int(kern["n"]), float(kern["gamma"]), float(kern["s"]),
                              float(kern.get("c_phi", 1.0)), float(kern.get("c_b", 1.0)))
    except KeyError as e:
        raise ConfigError(f"[kernel] missing {e.args[0]!r}") from None
    except ValueError as e:
        raise ConfigError(f"[kernel] {e}") from None
    n = params.n

    qd = data.get("quadrature", {})
    _reject_unknown("quadrature", qd, QUAD_KEYS)
    try:
        qspec = quad.QuadratureSpec(**qd)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[quadrature] {e}") from None

    ass = data.get("assumptions", {})
    _reject_unknown("assumptions", ass, ASSUMPTION_KEYS)
    R, delta = float(ass.get("R", 1.0)), float(ass.get("delta", 0.25))
    if not R > delta > 0:
        raise ConfigError("[assumptions] needs R > delta > 0")

    ch = data.get("checks", {})
    _reject_unknown("checks", ch, CHECK_KEYS)
    checks = Checks(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in ch.items()})
    if isinstance(checks.run, str):
        checks.run = CHECK_NAMES if checks.run == "all" else (checks.run,)
    unknown = sorted(set(checks.run) - set(CHECK_NAMES))
    if unknown:
        raise ConfigError(f"unknown checks: {', '.join(unknown)}")
    if checks.family not in ("standard", "none"):
        raise ConfigError("checks.family must be 'standard' or 'none'")

    table = dict(family.probe_pair(n))
    if checks.family == "standard":
        table.update(family.standard_family(n))
    fdefs = data.get("functions", {})
    if not isinstance(fdefs, dict):
        raise ConfigError("[functions] must be a table of named functions")
    for name, spec in fdefs.items():
        if not isinstance(spec, dict):
            raise ConfigError(f"functions.{name} must be a table")
        table[name] = build_function(name, spec, n, table)

    if checks.g not in table:
        raise ConfigError(f"checks.g refers to undefined function {checks.g!r}")
    names = [nm for nm in family.NAMES if nm in table]
    if not checks.f:
        checks.f = tuple(names[:6])
    if not checks.h:
        checks.h = tuple(names[6:12])
    if not checks.entropy_f:
        checks.entropy_f = tuple(nm for nm in family.POSITIVE if nm in table)[:6]
    bad = sorted(set(checks.identity_groups) - set(IDENTITY_GROUPS))
    if bad:
        raise ConfigError(f"unknown identity groups: {', '.join(bad)}")
    for nm in (*checks.f, *checks.h, *checks.entropy_f, *checks.invariant_f, checks.dyadic_f, checks.dyadic_h):
        if nm not in table:
            raise ConfigError(f"checks refer to undefined function {nm!r}")
    if checks.refine < 1:
        raise ConfigError("checks.refine must be at least 1: a check never passes on a single resolution")
    return Scenario(params, table, qspec, R, delta, checks, source)


def load(path) -> Scenario:
    path = Path(path)
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
    return parse(data, str(path))


def loads(text: str) -> Scenario:
    return parse(tomllib.loads(text))
