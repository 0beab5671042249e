import json
from pathlib import Path

import numpy as np
import pytest

from actionlab import SCENARIOS, parse_config, refinement_sweep, run_scenario
from actionlab.cli import main
from actionlab.scenarios import UnknownScenarioError


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_scenario_golden_defaults_pass(name):
    run = run_scenario(name)
    for check in run.checks:
        assert check.passed, f"{name}.{check.name}: {check.as_dict()}"


def test_unknown_scenario():
    with pytest.raises(UnknownScenarioError, match="UNKNOWN_SCENARIO"):
        run_scenario("nonesuch")


def test_scenario_rejects_unknown_param():
    with pytest.raises(ValueError, match="unknown parameter"):
        run_scenario("exact_form", {"bogus": 1})


def test_scenario_rejects_out_of_range_param():
    with pytest.raises(ValueError, match="below minimum"):
        run_scenario("exact_form", {"n": 1})


def test_exact_form_sweep_constant_zero():
    report = refinement_sweep("exact_form", [8, 16, 32])
    c0s = [row["c0"] for row in report["rows"]]
    assert all(abs(c) <= 1e-9 for c in c0s)


def test_tonelli_sweep_converges():
    report = refinement_sweep("tonelli_pendulum", [16, 32, 64])
    assert all("error" not in row for row in report["rows"])
    c0s = [row["c0"] for row in report["rows"]]
    gaps = [abs(c0s[i + 1] - c0s[i]) for i in range(len(c0s) - 1)]
    assert gaps[1] <= gaps[0] + 1e-12


def test_sweep_records_per_level_errors():
    report = refinement_sweep("exact_form", [8, 1, 16])
    kinds = ["error" in row for row in report["rows"]]
    assert kinds == [False, True, False]


def test_parse_config_values_and_errors():
    cfg = parse_config('n = 32\nV = "cos"\nrate = 0.5  # comment\n\n# full comment\n')
    assert cfg == {"n": 32, "V": "cos", "rate": 0.5}
    with pytest.raises(ValueError, match="line 1"):
        parse_config("broken line")
    with pytest.raises(ValueError, match="neither a number"):
        parse_config("x = unquoted")


def test_scenario_artifacts_and_byte_stability(tmp_path):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    run_scenario("tonelli_pendulum", {"n": 16}, outdir=out1, label="golden")
    run_scenario("tonelli_pendulum", {"n": 16}, outdir=out2, label="golden")
    d1 = out1 / "tonelli_pendulum" / "golden"
    d2 = out2 / "tonelli_pendulum" / "golden"
    names = sorted(p.name for p in d1.iterdir())
    assert "summary.json" in names and "solution.csv" in names
    for name in names:
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes(), name
    summary = json.loads((d1 / "summary.json").read_text())
    assert summary["passed"] is True
    assert all(c["passed"] for c in summary["checks"])


def test_cli_scenario_exit_codes(tmp_path, capsys):
    rc = main(["scenario", "exact_form", "--outdir", str(tmp_path), "--label", "golden"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "[pass]" in out and "FAIL" not in out
    assert (tmp_path / "exact_form" / "golden" / "summary.json").exists()

    rc = main(["scenario", "nonesuch"])
    assert rc == 2


def test_cli_scenario_param_and_config(tmp_path, capsys):
    cfg = tmp_path / "conf.txt"
    cfg.write_text('n = 8\nf = "saw"\n')
    rc = main(["scenario", "exact_form", "--config", str(cfg), "--param", "n = 16"])
    assert rc == 0


def test_cli_sweep(tmp_path, capsys):
    rc = main(
        ["sweep", "tonelli_pendulum", "--n", "16,32", "--outdir", str(tmp_path), "--label", "golden"]
    )
    assert rc == 0
    report = json.loads(
        (tmp_path / "tonelli_pendulum" / "golden" / "sweep.json").read_text()
    )
    assert [row["n"] for row in report["rows"]] == [16, 32]


def test_cli_solve_certify_roundtrip(tmp_path):
    from actionlab import build_torus_grid, sample_lagrangian
    from actionlab import serialize

    grid = build_torus_grid(1, 8, 1, 0.125)
    table = sample_lagrangian(grid, lambda x, v: 0.5 * v * v + np.cos(2 * np.pi * x))
    gpath = tmp_path / "grid.json"
    lpath = tmp_path / "lagrangian.csv"
    serialize.write_json(gpath, serialize.grid_to_json(grid))
    serialize.write_lagrangian_csv(lpath, table)

    outdir = tmp_path / "solved"
    rc = main(["solve", "--grid", str(gpath), "--lagrangian", str(lpath), "--outdir", str(outdir)])
    assert rc == 0
    summary = json.loads((outdir / "summary.json").read_text())
    assert summary["status"] == "OPTIMAL"
    assert abs(summary["value"] - (-1.0)) <= 1e-9

    certdir = tmp_path / "certified"
    rc = main(
        [
            "certify",
            "--grid",
            str(gpath),
            "--lagrangian",
            str(lpath),
            "--solution",
            str(outdir / "solution.csv"),
            "--outdir",
            str(certdir),
        ]
    )
    assert rc == 0
    cert = json.loads((certdir / "certificate.json").read_text())
    assert abs(cert["c0"] - (-1.0)) <= 1e-9
    assert cert["max_negative_slack"] <= 1e-9
    diag = json.loads((certdir / "diagnostics.json").read_text())
    assert diag["duality_gap"] <= 1e-9
    assert (certdir / "node_table.csv").exists()
    assert (certdir / "envelope.csv").exists()


def test_cli_boundary_solve_with_current(tmp_path):
    from actionlab import BoundaryCurrent, build_torus_grid, sample_lagrangian
    from actionlab import serialize

    grid = build_torus_grid(1, 10, 1, 1.0)
    table = sample_lagrangian(grid, lambda x, v: abs(v))
    current = BoundaryCurrent(grid=grid, charges={6: 1.0, 1: -1.0})
    gpath, lpath, cpath = (tmp_path / n for n in ("grid.json", "lag.csv", "cur.csv"))
    serialize.write_json(gpath, serialize.grid_to_json(grid))
    serialize.write_lagrangian_csv(lpath, table)
    serialize.write_current_csv(cpath, current)

    outdir = tmp_path / "out"
    rc = main(
        [
            "solve",
            "--grid",
            str(gpath),
            "--lagrangian",
            str(lpath),
            "--current",
            str(cpath),
            "--outdir",
            str(outdir),
        ]
    )
    assert rc == 0
    summary = json.loads((outdir / "summary.json").read_text())
    assert abs(summary["value"] - 0.5) <= 1e-9  # five unit steps of cost 1/10


def test_cli_control_roundtrip(tmp_path):
    from actionlab import serialize
    from actionlab.serialize import _write_csv

    desc = {
        "state_dim": 1,
        "n": 3,
        "origin": [-0.5],
        "spacing": 0.5,
        "controls": [-1, 1],
        "t0": 0.5,
        "dt": 0.25,
        "dynamics_csv": "dynamics.csv",
        "costs_csv": "costs.csv",
    }
    serialize.write_json(tmp_path / "problem.json", desc)
    dyn_rows = []
    for s in range(3):
        for a, lab in enumerate((-1, 1)):
            dyn_rows.append([s, a, lab])
    _write_csv(tmp_path / "dynamics.csv", ["x", "control", "step"], dyn_rows)
    cost_rows = []
    xs = [-0.5, 0.0, 0.5]
    for s in range(3):
        for j in range(2):
            for a in range(2):
                cost_rows.append([s, j, a, xs[s] ** 2])
    _write_csv(tmp_path / "costs.csv", ["x", "t_index", "control", "ell"], cost_rows)
    _write_csv(tmp_path / "init.csv", ["x", "mass"], [[1, 1.0]])

    outdir = tmp_path / "out"
    rc = main(
        [
            "control",
            "--problem",
            str(tmp_path / "problem.json"),
            "--init",
            str(tmp_path / "init.csv"),
            "--outdir",
            str(outdir),
        ]
    )
    assert rc == 0
    report = json.loads((outdir / "control_report.json").read_text())
    assert abs(report["lp_value"] - report["dp_total"]) <= 1e-9
    assert abs(report["lp_value"] - 0.25 * 0.25) <= 1e-12
    assert (outdir / "value_function.csv").exists()


def test_legendre_control_scenario_hjb_refines():
    r1 = run_scenario("legendre_control", {"refine": 1})
    r2 = run_scenario("legendre_control", {"refine": 2})
    assert r1.passed and r2.passed
    assert r1.values["hjb_residual"] / r2.values["hjb_residual"] >= 1.5
