"""File formats: grid JSON, CSV tables for measures/currents/Lagrangians,
certificate and diagnostics JSON, and the control-problem bundle.

All writers are deterministic (sorted keys, repr floats), so reports are
byte-stable across runs with identical inputs.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .grid import (
    BoundaryCurrent,
    DiscreteMeasure,
    LagrangianTable,
    PhaseGrid,
    build_torus_grid,
)
from .control import ControlProblem

__all__ = [
    "write_json",
    "grid_to_json",
    "grid_from_json",
    "write_lagrangian_csv",
    "read_lagrangian_csv",
    "write_measure_csv",
    "read_measure_csv",
    "write_current_csv",
    "read_current_csv",
    "write_certificate_json_with_support",
    "write_slack_csv",
    "write_envelope_csv",
    "write_node_table_csv",
    "write_value_function_csv",
    "read_control_problem",
    "read_initial_csv",
]


def _clean(obj):
    """JSON-encodable copy; non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, payload: dict) -> None:
    text = json.dumps(_clean(payload), sort_keys=True, indent=2)
    Path(path).write_text(text + "\n")


def _write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _node_cols(grid: PhaseGrid, node: int) -> list[int]:
    return list(grid.node_coords(node))


def _node_header(grid: PhaseGrid, base: str = "node") -> list[str]:
    if grid.dim == 1:
        return [base]
    return [f"{base}_i", f"{base}_j"]


def _offset_header(grid: PhaseGrid) -> list[str]:
    if grid.dim == 1:
        return ["offset"]
    return ["offset_i", "offset_j"]


def grid_to_json(grid: PhaseGrid) -> dict:
    return {
        "dim": grid.dim,
        "n": grid.nodes_per_dim,
        "stencil_radius": grid.stencil_radius,
        "h": grid.time_step,
    }


def grid_from_json(payload: dict) -> PhaseGrid:
    return build_torus_grid(
        int(payload["dim"]),
        int(payload["n"]),
        int(payload["stencil_radius"]),
        float(payload["h"]),
    )


def write_lagrangian_csv(path, table: LagrangianTable) -> None:
    grid = table.grid
    header = _node_header(grid) + _offset_header(grid) + ["value"]
    rows = []
    for node in range(grid.num_nodes):
        for m in range(grid.num_offsets):
            rows.append(
                _node_cols(grid, node)
                + [int(k) for k in grid.offsets[m]]
                + [float(table.values[node, m])]
            )
    _write_csv(path, header, rows)


def read_lagrangian_csv(grid: PhaseGrid, path) -> LagrangianTable:
    values = np.full((grid.num_nodes, grid.num_offsets), np.nan)
    for node, m, val in _read_edge_rows(grid, path):
        values[node, m] = val
    if np.isnan(values).any():
        raise ValueError(f"Lagrangian CSV {path} does not cover every edge")
    return LagrangianTable(grid=grid, values=values)


def _read_edge_rows(grid: PhaseGrid, path):
    d = grid.dim
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)  # header
        for row in reader:
            if not row:
                continue
            coords = [int(float(v)) for v in row[:d]]
            offset = [int(float(v)) for v in row[d : 2 * d]]
            node = grid.coords_to_node(coords)
            m = grid.offset_index(offset)
            yield node, m, float(row[2 * d])


def write_measure_csv(path, mu: DiscreteMeasure) -> None:
    grid = mu.grid
    header = _node_header(grid) + _offset_header(grid) + ["weight"]
    rows = []
    for (node, m), w in sorted(mu.weights.items()):
        rows.append(
            _node_cols(grid, node) + [int(k) for k in grid.offsets[m]] + [float(w)]
        )
    _write_csv(path, header, rows)


def read_measure_csv(grid: PhaseGrid, path) -> DiscreteMeasure:
    weights = {}
    for node, m, w in _read_edge_rows(grid, path):
        weights[(node, m)] = w
    return DiscreteMeasure(grid=grid, weights=weights)


def write_current_csv(path, current: BoundaryCurrent) -> None:
    grid = current.grid
    header = _node_header(grid) + ["charge"]
    rows = [
        _node_cols(grid, node) + [float(c)] for node, c in sorted(current.charges.items())
    ]
    _write_csv(path, header, rows)


def read_current_csv(grid: PhaseGrid, path) -> BoundaryCurrent:
    d = grid.dim
    charges = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if not row:
                continue
            coords = [int(float(v)) for v in row[:d]]
            charges[grid.coords_to_node(coords)] = float(row[d])
    return BoundaryCurrent(grid=grid, charges=charges)


def write_certificate_json_with_support(path, cert, mu) -> None:
    write_json(
        path,
        {
            "c0": cert.critical_constant,
            "normalization_node": cert.normalization_node,
            "f": cert.potential,
            "max_negative_slack": -min(cert.slack_min, 0.0),
            "slack_on_support": cert.slack_on_support(mu),
            "current_pairing": cert.current_pairing,
        },
    )


def write_slack_csv(path, cert) -> None:
    grid = cert.grid
    header = _node_header(grid) + _offset_header(grid) + ["g"]
    rows = []
    for node in range(grid.num_nodes):
        for m in range(grid.num_offsets):
            rows.append(
                _node_cols(grid, node)
                + [int(k) for k in grid.offsets[m]]
                + [float(cert.slack[node, m])]
            )
    _write_csv(path, header, rows)


def write_envelope_csv(path, table: LagrangianTable, env) -> None:
    grid = table.grid
    header = (
        _node_header(grid)
        + _offset_header(grid)
        + ["L", "L_tilde"]
        + (["p_minus", "p_plus"] if grid.dim == 1 else ["p_lo_i", "p_hi_i", "p_lo_j", "p_hi_j"])
        + ["endpoint"]
    )
    rows = []
    for node in range(grid.num_nodes):
        for m in range(grid.num_offsets):
            slopes = []
            for axis in range(grid.dim):
                slopes += [float(env.grad_lo[node, m, axis]), float(env.grad_hi[node, m, axis])]
            rows.append(
                _node_cols(grid, node)
                + [int(k) for k in grid.offsets[m]]
                + [float(table.values[node, m]), float(env.values[node, m])]
                + slopes
                + [int(env.endpoint[node, m])]
            )
    _write_csv(path, header, rows)


def write_node_table_csv(path, grid: PhaseGrid, report) -> None:
    header = _node_header(grid) + ["f", "momentum", "momentum_spread", "H_residual", "on_support"]
    rows = []
    for entry in report.details["nodes"]:
        mom = entry["momentum"]
        if mom is not None and not np.isscalar(mom):
            mom = "|".join(repr(float(v)) for v in np.atleast_1d(mom))
        rows.append(
            _node_cols(grid, entry["node"])
            + [
                float(entry["f"]),
                "" if mom is None else mom,
                "" if entry["momentum_spread"] is None else float(entry["momentum_spread"]),
                float(entry["H_residual"]),
                int(entry["on_support"]),
            ]
        )
    _write_csv(path, header, rows)


def write_value_function_csv(path, vf) -> None:
    p = vf.problem
    header = (["x"] if p.state_dim == 1 else ["x_i", "x_j"]) + ["t", "v", "argmin_control"]
    rows = []
    for s in range(p.num_states):
        coords = list(p.state_coords(s))
        for t_idx in range(p.num_steps + 1):
            a = int(vf.argmin_control[s, t_idx])
            rows.append(
                coords
                + [
                    float(t_idx * p.time_step),
                    float(vf.v[s, t_idx]),
                    "" if a < 0 else repr(p.controls[a]),
                ]
            )
    _write_csv(path, header, rows)


def read_control_problem(path) -> ControlProblem:
    """Control problem bundle: JSON description plus dynamics and cost CSVs.

    The JSON holds {state_dim, n, origin, spacing, controls, t0, dt,
    dynamics_csv, costs_csv}; CSV paths are relative to the JSON file.
    Dynamics rows are (state..., control_index, step...) integer steps; cost
    rows are (state..., t_index, control_index, ell).
    """
    path = Path(path)
    desc = json.loads(path.read_text())
    state_dim = int(desc["state_dim"])
    n = int(desc["n"])
    origin = np.atleast_1d(np.asarray(desc["origin"], dtype=float))
    spacing = float(desc["spacing"])
    controls = tuple(desc["controls"])
    t0 = float(desc["t0"])
    dt = float(desc["dt"])
    T = int(round(t0 / dt))
    S = n**state_dim
    A = len(controls)

    move = np.full((S, A), -1, dtype=int)
    steps = np.zeros((S, A, state_dim), dtype=int)
    ell = np.full((S, T, A), np.nan)

    def coords_to_state(coords):
        return coords[0] if state_dim == 1 else coords[0] * n + coords[1]

    with open(path.parent / desc["dynamics_csv"], newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if not row:
                continue
            coords = [int(float(v)) for v in row[:state_dim]]
            a = int(float(row[state_dim]))
            step = [int(float(v)) for v in row[state_dim + 1 : 2 * state_dim + 1]]
            s = coords_to_state(coords)
            target = [c + k for c, k in zip(coords, step)]
            if all(0 <= c < n for c in target):
                steps[s, a] = step
                move[s, a] = coords_to_state(target)

    with open(path.parent / desc["costs_csv"], newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if not row:
                continue
            coords = [int(float(v)) for v in row[:state_dim]]
            j = int(float(row[state_dim]))
            a = int(float(row[state_dim + 1]))
            ell[coords_to_state(coords), j, a] = float(row[state_dim + 2])

    if np.isnan(ell).any():
        raise ValueError("cost CSV does not cover every (state, time, control)")
    for s in range(S):
        if not (move[s] >= 0).any():
            raise ValueError(f"state {s} has no admissible control")

    from .control import _collapse_duplicates

    active, collapses = _collapse_duplicates(move, ell)
    return ControlProblem(
        state_dim=state_dim,
        nodes_per_axis=n,
        origin=origin,
        spacing=spacing,
        controls=controls,
        move=move,
        steps=steps,
        ell=ell,
        horizon=t0,
        time_step=dt,
        active=active,
        duplicate_collapses=tuple(collapses),
    )


def read_initial_csv(num_states: int, state_dim: int, n: int, path) -> np.ndarray:
    init = np.zeros(num_states)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if not row:
                continue
            coords = [int(float(v)) for v in row[:state_dim]]
            s = coords[0] if state_dim == 1 else coords[0] * n + coords[1]
            init[s] = float(row[state_dim])
    return init
