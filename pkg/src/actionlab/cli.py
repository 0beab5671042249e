"""Command-line surface.

Subcommands: solve, certify, control, scenario, sweep.  Exit codes: 0 all
checks pass, 1 a check missed its tolerance, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import serialize
from .certificates import certify_boundary, certify_closed
from .convexify import fiber_convex_envelope
from .diagnostics import full_report
from .measure_lp import OPTIMAL, solve_boundary, solve_closed
from .scenarios import UnknownScenarioError, parse_config, refinement_sweep, run_scenario
from . import control as ctl

USAGE_ERROR = 2
CHECK_FAILURE = 1


def _default_label(args) -> str:
    if args.label:
        return args.label
    return datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")


def _load_problem(args):
    import json

    grid = serialize.grid_from_json(json.loads(Path(args.grid).read_text()))
    table = serialize.read_lagrangian_csv(grid, args.lagrangian)
    current = None
    if args.current:
        current = serialize.read_current_csv(grid, args.current)
    return grid, table, current


def _cmd_solve(args) -> int:
    grid, table, current = _load_problem(args)
    solution = solve_closed(table) if current is None else solve_boundary(table, current)
    dest = Path(args.outdir)
    dest.mkdir(parents=True, exist_ok=True)
    serialize.write_measure_csv(dest / "solution.csv", solution.measure)
    serialize.write_json(
        dest / "summary.json",
        {
            "value": solution.value,
            "status": solution.status,
            "mass": solution.measure.mass,
        },
    )
    print(f"status {solution.status}  value {solution.value!r}")
    return 0


def _cmd_certify(args) -> int:
    grid, table, current = _load_problem(args)
    measure = serialize.read_measure_csv(grid, args.solution)
    value = float(sum(table.values[e] * w for e, w in measure.weights.items()))
    from .measure_lp import OptimalSolution

    solution = OptimalSolution(measure=measure, value=value, status=OPTIMAL)
    try:
        if current is None:
            cert = certify_closed(table, solution)
        else:
            cert = certify_boundary(table, current, solution)
    except RuntimeError as exc:
        # negative reduced/residual cycle: the supplied measure is not optimal
        print(f"certification failed: {exc}", file=sys.stderr)
        return CHECK_FAILURE
    envelope = fiber_convex_envelope(table)
    report = full_report(table, solution, cert, envelope, current=current)

    dest = Path(args.outdir)
    dest.mkdir(parents=True, exist_ok=True)
    serialize.write_certificate_json_with_support(dest / "certificate.json", cert, measure)
    serialize.write_slack_csv(dest / "slack.csv", cert)
    serialize.write_envelope_csv(dest / "envelope.csv", table, envelope)
    serialize.write_json(dest / "diagnostics.json", report.as_dict())
    serialize.write_node_table_csv(dest / "node_table.csv", grid, report)

    ok = (
        report.slack_min >= -args.tol
        and report.slack_on_support_max <= args.tol
        and report.hamiltonian_residual_max <= args.tol
        and report.duality_gap <= args.tol
    )
    print(
        f"slack_min {report.slack_min!r}  slack_on_support {report.slack_on_support_max!r}  "
        f"gap {report.duality_gap!r}  energy {report.hamiltonian_residual_max!r}"
    )
    return 0 if ok else CHECK_FAILURE


def _cmd_control(args) -> int:
    problem = serialize.read_control_problem(args.problem)
    init = serialize.read_initial_csv(
        problem.num_states, problem.state_dim, problem.nodes_per_axis, args.init
    )
    vf = ctl.solve_value_function(problem)
    lp = ctl.solve_relaxed_lp(problem, init)
    dest = Path(args.outdir)
    dest.mkdir(parents=True, exist_ok=True)
    serialize.write_value_function_csv(dest / "value_function.csv", vf)
    if lp.status != OPTIMAL:
        serialize.write_json(dest / "control_report.json", {"status": lp.status})
        print(f"status {lp.status}")
        return CHECK_FAILURE
    cert = ctl.certify_control(problem, lp)
    mp = ctl.maximum_principle_check(cert, lp.measure)
    trajs = ctl.extract_optimal_trajectories(problem, lp)
    uv = max((ctl.check_u_v_relation(cert, vf, t) for t, _m in trajs), default=0.0)
    hjb = ctl.hjb_residual(vf, problem)
    dp_total = float(np.dot(lp.initial, vf.v[:, -1]))

    serialize.write_json(
        dest / "control_certificate.json",
        {"c0": cert.c0, "empirical_mean_cost": cert.empirical_mean_cost, "u": cert.u},
    )
    serialize.write_json(
        dest / "control_report.json",
        {
            "status": lp.status,
            "lp_value": lp.value,
            "dp_total": dp_total,
            "hjb_residual": hjb,
            "max_principle_on_support": mp[0],
            "max_principle_off_support": mp[1],
            "u_v_residual": uv,
        },
    )
    ok = (
        abs(lp.value - dp_total) <= args.tol
        and mp[0] <= args.tol
        and mp[1] >= -args.tol
        and uv <= args.tol
    )
    print(
        f"lp {lp.value!r}  dp {dp_total!r}  max-principle {mp!r}  u/v {uv!r}  hjb {hjb!r}"
    )
    return 0 if ok else CHECK_FAILURE


def _parse_params(pairs, config_path) -> dict:
    params: dict = {}
    if config_path:
        params.update(parse_config(Path(config_path).read_text()))
    for item in pairs or []:
        if "=" not in item:
            raise ValueError(f"--param expects key=value, got {item!r}")
        params.update(parse_config(item))
    return params


def _cmd_scenario(args) -> int:
    params = _parse_params(args.param, args.config)
    run = run_scenario(
        args.name, params, outdir=args.outdir, label=_default_label(args), tol=args.tol
    )
    for check in run.checks:
        mark = "pass" if check.passed else "FAIL"
        print(
            f"[{mark}] {run.name}.{check.name}: actual {check.actual!r} "
            f"expected {check.expected!r} tol {check.tol!r} ({check.source})"
        )
    return 0 if run.passed else CHECK_FAILURE


def _cmd_sweep(args) -> int:
    params = _parse_params(args.param, args.config)
    n_list = [int(v) for v in args.n.split(",") if v]
    report = refinement_sweep(
        args.name, n_list, params, outdir=args.outdir, label=_default_label(args)
    )
    ok = True
    for row in report["rows"]:
        if "error" in row:
            ok = False
            print(f"n={row['n']}: ERROR {row['error']}")
        else:
            ok = ok and row["passed"]
            shown = {k: v for k, v in row.items() if k not in ("n", "passed")}
            print(f"n={row['n']}: passed={row['passed']} {shown}")
    return 0 if ok else CHECK_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="actionlab",
        description="Action minimization over discrete measures: solvers, "
        "certificates, diagnostics, scenarios.",
    )
    parser.add_argument("--seed", type=int, default=0, help="seed for randomized suites")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a problem given grid/Lagrangian/current files")
    p.add_argument("--grid", required=True)
    p.add_argument("--lagrangian", required=True)
    p.add_argument("--current", default=None, help="omit for the closed problem")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("certify", help="certificate + diagnostics for a solution file")
    p.add_argument("--grid", required=True)
    p.add_argument("--lagrangian", required=True)
    p.add_argument("--current", default=None)
    p.add_argument("--solution", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("control", help="solve and verify a finite-horizon control problem")
    p.add_argument("--problem", required=True, help="problem JSON bundle")
    p.add_argument("--init", required=True, help="initial distribution CSV")
    p.add_argument("--outdir", required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=_cmd_control)

    p = sub.add_parser("scenario", help="run a registered scenario")
    p.add_argument("name")
    p.add_argument("--param", action="append", help="key=value override", default=[])
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--outdir", default=None)
    p.add_argument("--label", default=None, help="run directory name (default: UTC timestamp)")
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=_cmd_scenario)

    p = sub.add_parser("sweep", help="refinement sweep of a scenario")
    p.add_argument("name")
    p.add_argument("--n", required=True, help="comma-separated refinement levels, e.g. 16,32,64")
    p.add_argument("--param", action="append", default=[])
    p.add_argument("--config", default=None)
    p.add_argument("--outdir", default=None)
    p.add_argument("--label", default=None)
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UnknownScenarioError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
