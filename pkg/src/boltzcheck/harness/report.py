"""Report emission: one CSV per check, plot-data CSVs, a JSON summary, optional PNGs.

CSV bodies depend only on (scenario, seed): floats are written with a fixed
format and nothing time- or host-dependent goes into them.
"""

from __future__ import annotations

import csv
import json
import platform
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import scipy

COLUMNS = ("check", "case", "lhs", "rhs", "ratio", "error_bound", "drift", "pass")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.10e}"


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    return x


def write_check_csv(result, out: Path) -> Path:
    path = out / f"{result.name}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in result.records:
            w.writerow([r.check, r.case, fmt(r.lhs), fmt(r.rhs), fmt(r.ratio), fmt(r.error_bound), fmt(r.drift),
                        fmt(r.passed)])
    return path


def write_plot_csv(name: str, header, rows, out: Path) -> Path:
    path = out / f"plot_{name}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])
    return path


def environment(scn) -> dict:
    from .checks import fine_spec

    return {
        "seed": scn.quad.seed,
        "threads": scn.quad.threads,
        "quadrature": asdict(scn.quad),
        "quadrature_refined": asdict(fine_spec(scn)),
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
    }


def summary(scn, results) -> dict:
    constants = {}
    for r in results:
        constants.update(r.constants)
    p = scn.params
    return _plain({
        "scenario": scn.source,
        "kernel": {"n": p.n, "gamma": p.gamma, "s": p.s, "c_phi": p.c_phi, "c_b": p.c_b},
        "assumptions": {"R": scn.R, "delta": scn.delta},
        "checks": {r.name: {"passed": r.passed, "records": len(r.records),
                            "failed": [x.case for x in r.records if not x.passed]} for r in results},
        "passed": all(r.passed for r in results),
        "constants": constants,
        "environment": environment(scn),
    })


def render_plots(results, out: Path) -> list:
    """PNG renderings of the plot-data tables (matplotlib, Agg backend)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    for r in results:
        for name, (header, rows) in r.plots.items():
            if not rows:
                continue
            fig, ax = plt.subplots(figsize=(5.5, 4.0))
            if name == "dyadic_slopes":
                k = [row[0] for row in rows]
                for col, label in ((1, "|D-|"), (3, "|D+ - D-|"), (5, "|D+ - D*|")):
                    ax.plot(k, [row[col] for row in rows], "o-", label=label)
                ax.set_xlabel("k")
                ax.set_ylabel("log2 magnitude")
            elif name == "sandwich_ratios":
                x = np.arange(len(rows))
                ax.bar(x - 0.2, [row[4] for row in rows], 0.4, label="lower / N")
                ax.bar(x + 0.2, [row[5] for row in rows], 0.4, label="N / upper")
                ax.set_xticks(x)
                ax.set_xticklabels([row[0] for row in rows], rotation=60, fontsize=7)
                ax.set_ylabel("ratio")
            else:
                for j in range(1, len(header)):
                    ax.plot([row[0] for row in rows], [row[j] for row in rows], "o-", label=header[j])
            ax.legend(fontsize=8)
            fig.tight_layout()
            path = out / f"plot_{name}.png"
            fig.savefig(path, dpi=120)
            plt.close(fig)
            paths.append(path)
    return paths


def write_report(scn, results, out, plots: bool = False) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for r in results:
        write_check_csv(r, out)
        for name, (header, rows) in r.plots.items():
            write_plot_csv(name, header, rows, out)
    summ = summary(scn, results)
    with open(out / "summary.json", "w") as fh:
        json.dump(summ, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if plots:
        render_plots(results, out)
    return summ
