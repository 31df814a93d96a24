import csv
import json
from importlib import resources

import numpy as np
import pytest

from boltzcheck.harness import checks, cli, config, family, report

BASE = """
[kernel]
n = 2
gamma = -1.0
s = 0.5

[functions.g]
kind = "ball"
radius = 1.0
"""

FAST = BASE + """
[checks]
run = ["identities"]
identity_groups = ["geometry", "metric"]
geometry_samples = 2000
metric_samples = 2000
"""


def test_defaults_fill_in():
    scn = config.loads(BASE)
    assert scn.checks.run == config.CHECK_NAMES
    assert scn.checks.f == family.NAMES[:6] and scn.checks.h == family.NAMES[6:]
    assert all(nm in family.POSITIVE for nm in scn.checks.entropy_f)
    assert scn.R == 1.0 and scn.delta == 0.25
    assert scn.quad.backend == "deterministic"


def test_run_all_and_single_string():
    assert config.loads(BASE + '[checks]\nrun = "all"\n').checks.run == config.CHECK_NAMES
    assert config.loads(BASE + '[checks]\nrun = "upper"\n').checks.run == ("upper",)


@pytest.mark.parametrize("extra", [
    "[kernel2]\nx = 1\n",
    "[quadrature]\nnodes = 3\n",
    "[checks]\nrefine = 0\n",
    "[checks]\nrun = [\"everything\"]\n",
    "[checks]\ng = \"nowhere\"\n",
    "[checks]\nf = [\"unit\", \"ghost\"]\n",
    "[checks]\nidentity_groups = [\"magic\"]\n",
    "[checks]\nfamily = \"large\"\n",
    "[assumptions]\nR = 0.2\ndelta = 0.25\n",
    "[functions.t]\nkind = \"truncated\"\nbase = \"later\"\nradius = 1.0\n",
    "[functions.m]\nkind = \"mixture\"\ncomponents = [{amplitude = 1.0, center = [0.0]}]\n",
    "[functions.m]\nkind = \"cube\"\n",
    "[functions.b]\nkind = \"ball\"\nside = 1.0\n",
])
def test_bad_configs_are_rejected(extra):
    with pytest.raises(config.ConfigError):
        config.loads(BASE + extra)


def test_missing_kernel_is_rejected():
    with pytest.raises(config.ConfigError):
        config.loads("[checks]\nrun = \"all\"\n")


@pytest.mark.parametrize("kernel", ["n = 2\ngamma = -3.0\ns = 0.5", "n = 2\ngamma = 0.0\ns = 1.0",
                                    "n = 2\ngamma = 0.0"])
def test_bad_kernel_values_are_config_errors(kernel):
    with pytest.raises(config.ConfigError):
        config.loads(f"[kernel]\n{kernel}\n")
    with pytest.raises(config.ConfigError):
        config.loads(BASE + "[quadrature]\nangular_nodes = 7\n")


def test_function_kinds():
    scn = config.loads(BASE + """
[functions.mu]
kind = "maxwellian"
temp = 2.0

[functions.t]
kind = "truncated"
base = "mu"
radius = 1.5

[functions.m]
components = [{amplitude = 2.0, center = [0.1, 0.2], beta = 0.3}]

[functions.fam]
kind = "family"
member = "pair"
""")
    v = np.array([[0.3, -0.2], [2.0, 0.0]])
    mu = scn.function("mu")
    assert np.allclose(mu(v), np.exp(-np.sum(v * v, -1) / 4.0) / (4 * np.pi))
    assert np.allclose(scn.function("t")(v), [mu(v)[0], 0.0])
    c = np.array([0.1, 0.2])
    lifted = np.c_[v, 0.5 * np.sum(v * v, -1)]
    assert np.allclose(scn.function("m")(v), 2.0 * np.exp(-0.3 * np.sum((lifted - np.r_[c, 0.0]) ** 2, -1)))
    assert np.allclose(scn.function("fam")(v), family.member("pair", 2)(v))


def test_family_has_twelve_members_with_fixed_order():
    fam = family.standard_family(3)
    assert tuple(fam) == family.NAMES and len(fam) == 12
    assert "negative" not in family.POSITIVE and "dipole" not in family.POSITIVE
    with pytest.raises(KeyError):
        family.member("nothing", 2)


def test_bundled_scenarios_parse():
    names = sorted(p.name for p in resources.files("boltzcheck.scenarios").iterdir() if p.name.endswith(".toml"))
    assert names
    for nm in names:
        with resources.as_file(resources.files("boltzcheck.scenarios") / nm) as path:
            scn = config.load(path)
            assert scn.params.n in (2, 3)


def test_fmt_is_fixed():
    assert report.fmt(True) == "true" and report.fmt(np.bool_(False)) == "false"
    assert report.fmt(3) == "3"
    assert report.fmt(0.1) == "1.0000000000e-01"
    assert report.fmt(float("nan")) == "nan" and report.fmt(-np.inf) == "-inf"


def test_drift_and_slope_helpers():
    assert checks.drift(1.0, 1.1) == pytest.approx(0.1 / 1.1)
    assert checks.drift(0.0, 1e-12) == 0.0
    assert checks.slope([0, 1, 2, 3], [1, 2, 4, 8]) == pytest.approx(1.0)


def test_report_files(tmp_path):
    scn = config.loads(FAST)
    results = checks.run_checks(scn)
    summ = report.write_report(scn, results, tmp_path)
    with open(tmp_path / "identities.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == report.COLUMNS
    cases = [r[1] for r in rows[1:]]
    assert "geometry:energy" in cases and "metric:triangle" in cases
    assert all(r[-1] == "true" for r in rows[1:])
    data = json.loads((tmp_path / "summary.json").read_text())
    assert data["passed"] is True and summ["passed"] is True
    assert data["environment"]["seed"] == scn.quad.seed


def test_cli_verify_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "fast.toml"
    cfg.write_text(FAST)
    out = tmp_path / "rep"
    assert cli.main(["verify", "--config", str(cfg), "--check", "identities", "--out", str(out)]) == 0
    assert "PASS identities" in capsys.readouterr().out
    assert (out / "identities.csv").exists()
    bad = tmp_path / "bad.toml"
    bad.write_text(BASE + "[checks]\nbogus = 1\n")
    assert cli.main(["verify", "--config", str(bad)]) == 2
    assert cli.main(["verify", "--config", str(tmp_path / "missing.toml")]) == 2
    assert cli.main(["verify", "--config", str(cfg), "--refine", "0"]) == 2


def test_cli_plots(tmp_path):
    cfg = tmp_path / "fast.toml"
    cfg.write_text(FAST)
    out = tmp_path / "rep"
    # geometry and metric emit no plot tables; the flag must still run cleanly
    assert cli.main(["verify", "--config", str(cfg), "--out", str(out), "--plots"]) == 0


def test_render_plots_writes_png(tmp_path):
    res = checks.CheckResult("identities")
    res.plots["dyadic_slopes"] = (("k", "a", "ea", "b", "eb", "c", "ec"),
                                  [(k, -k, 0, -2 * k, 0, -3 * k, 0) for k in range(4)])
    paths = report.render_plots([res], tmp_path)
    assert [p.name for p in paths] == ["plot_dyadic_slopes.png"]
    assert paths[0].stat().st_size > 0


def test_cli_norms_and_eval(tmp_path, capsys):
    cfg = tmp_path / "s.toml"
    cfg.write_text(BASE + "[quadrature]\nnodes_per_cell = 3\nangular_nodes = 16\n")
    assert cli.main(["norms", "--config", str(cfg), "--function", "unit"]) == 0
    out = capsys.readouterr().out
    assert out.count("+-") == 6 and "|f|_N" in out
    assert cli.main(["eval", "trilinear", "--config", str(cfg), "--g", "g", "--f", "unit", "--h", "offset"]) == 0
    assert capsys.readouterr().out.startswith("<Q(g, unit), offset> = ")
    assert cli.main(["norms", "--config", str(cfg), "--function", "ghost"]) == 2
