import json

import numpy as np
import pytest

from actionlab import (
    BoundaryCurrent,
    DiscreteMeasure,
    build_torus_grid,
    sample_lagrangian,
)
from actionlab import serialize
from actionlab.cli import main


@pytest.mark.parametrize("d,n,k", [(1, 6, 2), (2, 3, 1)])
def test_grid_json_roundtrip(tmp_path, d, n, k):
    grid = build_torus_grid(d, n, k, 0.5)
    path = tmp_path / "grid.json"
    serialize.write_json(path, serialize.grid_to_json(grid))
    back = serialize.grid_from_json(json.loads(path.read_text()))
    assert back.same_layout(grid)


@pytest.mark.parametrize("d,n,k", [(1, 5, 1), (2, 3, 1)])
def test_lagrangian_csv_roundtrip(tmp_path, d, n, k):
    rng = np.random.default_rng(2)
    grid = build_torus_grid(d, n, k, 0.25)
    table = sample_lagrangian(grid, lambda x, v: float(rng.normal()))
    path = tmp_path / "lag.csv"
    serialize.write_lagrangian_csv(path, table)
    back = serialize.read_lagrangian_csv(grid, path)
    assert np.array_equal(back.values, table.values)


@pytest.mark.parametrize("d,n,k", [(1, 7, 2), (2, 4, 1)])
def test_measure_csv_roundtrip(tmp_path, d, n, k):
    rng = np.random.default_rng(3)
    grid = build_torus_grid(d, n, k, 0.25)
    ids = rng.choice(grid.num_edges, size=5, replace=False)
    weights = {
        (int(e) // grid.num_offsets, int(e) % grid.num_offsets): float(w)
        for e, w in zip(ids, rng.uniform(0.1, 1.0, size=5))
    }
    mu = DiscreteMeasure(grid=grid, weights=weights)
    path = tmp_path / "mu.csv"
    serialize.write_measure_csv(path, mu)
    back = serialize.read_measure_csv(grid, path)
    assert back.weights == mu.weights


def test_current_csv_roundtrip(tmp_path):
    grid = build_torus_grid(2, 3, 1, 1.0)
    cur = BoundaryCurrent(grid=grid, charges={0: 1.5, 4: -0.5, 8: -1.0})
    path = tmp_path / "cur.csv"
    serialize.write_current_csv(path, cur)
    back = serialize.read_current_csv(grid, path)
    assert back.charges == cur.charges


def test_json_replaces_non_finite(tmp_path):
    path = tmp_path / "x.json"
    serialize.write_json(path, {"v": float("-inf"), "w": 1.25})
    data = json.loads(path.read_text())
    assert data == {"v": None, "w": 1.25}


def test_cli_certify_flags_bad_solution(tmp_path):
    # feed a deliberately suboptimal measure; support slack exceeds the
    # tolerance so the certify subcommand must exit 1
    grid = build_torus_grid(1, 8, 1, 0.125)
    table = sample_lagrangian(grid, lambda x, v: 0.5 * v * v + np.cos(2 * np.pi * x))
    gpath, lpath, spath = (tmp_path / x for x in ("g.json", "l.csv", "s.csv"))
    serialize.write_json(gpath, serialize.grid_to_json(grid))
    serialize.write_lagrangian_csv(lpath, table)
    bad = DiscreteMeasure(grid=grid, weights={(0, grid.zero_offset_index): 1.0})
    serialize.write_measure_csv(spath, bad)
    rc = main(
        [
            "certify",
            "--grid",
            str(gpath),
            "--lagrangian",
            str(lpath),
            "--solution",
            str(spath),
            "--outdir",
            str(tmp_path / "out"),
        ]
    )
    assert rc == 1
