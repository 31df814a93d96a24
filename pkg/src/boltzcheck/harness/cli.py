"""Command line: ``boltzcheck verify | norms | eval trilinear``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .. import metric_norms as mn
from .. import weakform as wf
from . import checks, config, report


def _load(args) -> config.Scenario:
    scn = config.load(args.config)
    scn = scn.with_overrides(seed=getattr(args, "seed", None), threads=getattr(args, "threads", None))
    refine = getattr(args, "refine", None)
    if refine is not None:
        if refine < 1:
            raise config.ConfigError("--refine must be at least 1")
        scn = replace(scn, checks=replace(scn.checks, refine=int(refine)))
    return scn


def cmd_verify(args) -> int:
    scn = _load(args)
    names = config.CHECK_NAMES if args.check == "all" else (args.check,)
    if args.check == "all" and scn.checks.run != config.CHECK_NAMES:
        names = scn.checks.run
    results = checks.run_checks(scn, names)
    summ = report.write_report(scn, results, args.out, plots=args.plots)
    for r in results:
        bad = [x.case for x in r.records if not x.passed]
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {len(r.records)} records"
              + (f", failing: {', '.join(bad)}" if bad else ""))
    print(f"report written to {args.out}")
    return 0 if summ["passed"] else 1


def cmd_norms(args) -> int:
    scn = _load(args)
    f = scn.function(args.function)
    p, q = scn.params, scn.quad
    sn = mn.SeminormSpec.from_params(p)
    parts = mn.norm_n_full(f, sn, q)
    rows = [
        ("|f|_N", parts.total),
        ("|f|^2_Ndot", parts.seminorm_sq),
        (f"||f||^2_L2_{{{p.gamma + 2 * p.s:g}}}", parts.lebesgue_sq),
        (f"||f||_H^{p.s:g}_{p.gamma:g}", mn.iso_sobolev(f, p.s, p.gamma, q)),
        (f"||f||_H^{p.s:g}_{p.gamma + 2 * p.s:g}", mn.iso_sobolev(f, p.s, p.gamma + 2 * p.s, q)),
        (f"||f||_L1_{p.gamma:g}", mn.weighted_lp(f, mn.WeightedNormSpec(1.0, p.gamma), q)),
    ]
    for name, est in rows:
        print(f"{name:24s} {est.value:.10e} +- {est.error:.2e}")
    return 0


def cmd_eval(args) -> int:
    scn = _load(args)
    g, f, h = scn.function(args.g), scn.function(args.f), scn.function(args.h)
    est = wf.trilinear_sigma(g, f, h, scn.params, scn.quad)
    print(f"<Q({args.g}, {args.f}), {args.h}> = {est.value:.10e} +- {est.error:.2e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="boltzcheck", description="Numerical checks of non-cutoff collision estimates.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="scenario TOML file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)

    v = sub.add_parser("verify", help="run verification checks and write a report")
    common(v)
    v.add_argument("--check", choices=(*config.CHECK_NAMES, "all"), default="all")
    v.add_argument("--out", default="boltzcheck-report")
    v.add_argument("--refine", type=int, default=None, help="refinement doublings for drift figures")
    v.add_argument("--plots", action="store_true", help="also render PNGs from the plot-data CSVs")
    v.set_defaults(func=cmd_verify)

    n = sub.add_parser("norms", help="print the norms of one function")
    common(n)
    n.add_argument("--function", required=True)
    n.set_defaults(func=cmd_norms)

    e = sub.add_parser("eval", help="evaluate a functional")
    esub = e.add_subparsers(dest="what", required=True)
    t = esub.add_parser("trilinear", help="<Q(g, f), h>")
    common(t)
    t.add_argument("--g", required=True)
    t.add_argument("--f", required=True)
    t.add_argument("--h", required=True)
    t.set_defaults(func=cmd_eval)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return int(args.func(args))
    except (config.ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
