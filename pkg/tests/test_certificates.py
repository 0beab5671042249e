import numpy as np
import pytest

from actionlab import (
    BoundaryCurrent,
    LagrangianTable,
    build_torus_grid,
    certify_boundary,
    certify_closed,
    discrete_differential,
    lax_oleinik_backward,
    lax_oleinik_forward,
    sample_lagrangian,
    solve_boundary,
    solve_closed,
    weak_kam_iterate,
)
from actionlab.measure_lp import OptimalSolution, OPTIMAL

from oracles import random_closed_instance


def two_node_table():
    grid = build_torus_grid(1, 2, 1, 1.0)
    values = np.array([[9.0, 2.0, 3.0], [9.0, 5.0, 1.0]])
    return LagrangianTable(grid=grid, values=values)


def test_two_node_certificate_hand_values():
    table = two_node_table()
    sol = solve_closed(table)
    cert = certify_closed(table, sol)
    assert cert.critical_constant == pytest.approx(2.0, abs=1e-12)
    assert cert.normalization_node == 0
    # dual feasibility forces f1 - f0 = 1: 3 >= 2 + (f1-f0) and 1 >= 2 - (f1-f0)
    assert cert.potential[0] == 0.0
    assert cert.potential[1] == pytest.approx(1.0, abs=1e-12)
    assert cert.slack[0, 1] == pytest.approx(0.0, abs=1e-12)  # loop at node 0
    assert cert.slack[1, 1] == pytest.approx(3.0, abs=1e-12)  # loop at node 1
    assert cert.slack[0, 2] == pytest.approx(0.0, abs=1e-12)  # 0 -> 1
    assert cert.slack[1, 2] == pytest.approx(0.0, abs=1e-12)  # 1 -> 0


def test_exact_form_recovers_potential():
    grid = build_torus_grid(1, 12, 1, 1.0 / 12)
    f0 = np.cos(2 * np.pi * np.arange(12) / 12) + 0.3
    df0 = (f0[grid.neighbors] - f0[:, None]) / grid.time_step
    table = LagrangianTable(grid=grid, values=df0)
    sol = solve_closed(table)
    cert = certify_closed(table, sol)
    assert cert.critical_constant == pytest.approx(0.0, abs=1e-12)
    target = f0 - f0[cert.normalization_node]
    assert np.max(np.abs(cert.potential - target)) <= 1e-10
    assert np.max(np.abs(cert.slack)) <= 1e-10


def test_kinetic_certificate_is_trivial():
    grid = build_torus_grid(1, 8, 1, 0.125)
    table = sample_lagrangian(grid, lambda x, v: 0.5 * v * v)
    sol = solve_closed(table)
    cert = certify_closed(table, sol)
    assert cert.critical_constant == 0.0
    assert np.all(cert.potential == 0.0)
    assert np.allclose(cert.slack, table.values, atol=1e-15)


def test_certify_rejects_non_optimal_status():
    table = two_node_table()
    sol = solve_closed(table)
    sol.status = "UNBOUNDED"
    with pytest.raises(ValueError, match="status"):
        certify_closed(table, sol)


def test_certify_faults_on_wrong_constant():
    # value below the true critical constant leaves a negative reduced cycle
    table = two_node_table()
    sol = solve_closed(table)
    bogus = OptimalSolution(measure=sol.measure, value=sol.value + 1.0, status=OPTIMAL)
    with pytest.raises(RuntimeError, match="negative cycle"):
        certify_closed(table, bogus)


def test_closed_certificate_properties_random():
    rng = np.random.default_rng(31)
    for _ in range(20):
        table = random_closed_instance(rng, max_n=32)
        sol = solve_closed(table)
        cert = certify_closed(table, sol)
        # strong duality and the exact decomposition
        assert cert.critical_constant == sol.value
        df = discrete_differential(cert.potential, table.grid)
        ident = table.values - cert.critical_constant - df - cert.slack
        assert np.max(np.abs(ident)) == 0.0
        assert cert.slack_min >= -1e-9
        assert cert.slack_on_support(sol.measure) <= 1e-8
        # complementary slackness
        pairing = sum(w * cert.slack[e] for e, w in sol.measure.weights.items())
        assert pairing <= 1e-8 * sol.measure.mass


def test_gauge_invariance_of_slack():
    table = two_node_table()
    sol = solve_closed(table)
    cert = certify_closed(table, sol)
    df_shifted = discrete_differential(cert.potential + 5.0, table.grid)
    g_shifted = table.values - cert.critical_constant - df_shifted
    assert np.allclose(g_shifted, cert.slack, atol=1e-12)


def test_boundary_certificate_distance_function():
    grid = build_torus_grid(1, 16, 1, 1.0)
    table = sample_lagrangian(grid, lambda x, v: abs(v))
    current = BoundaryCurrent(grid=grid, charges={8: 1.0, 0: -1.0})
    sol = solve_boundary(table, current)
    cert = certify_boundary(table, current, sol)
    assert cert.critical_constant == 0.0
    f = cert.potential - cert.potential[0]
    # distance profile to node 0 in the |v| metric: (1/16) per step, wrapping
    expected = np.array([min(i, 16 - i) / 16 for i in range(16)])
    assert np.max(np.abs(f - expected)) <= 1e-9
    assert cert.current_pairing == pytest.approx(sol.value, abs=1e-9)
    assert cert.slack_min >= -1e-9
    assert cert.slack_on_support(sol.measure) <= 1e-8


def test_boundary_certificate_unit_cost_increments():
    grid = build_torus_grid(1, 6, 1, 0.5)
    values = np.where(np.abs(grid.velocities.ravel()) > 0, 1.0, 0.25)
    table = LagrangianTable(grid=grid, values=np.tile(values, (6, 1)))
    current = BoundaryCurrent(grid=grid, charges={2: 1.0 / 0.5, 0: -1.0 / 0.5})
    sol = solve_boundary(table, current)
    cert = certify_boundary(table, current, sol)
    # f increments by h*L = 0.5 along each tight unit-offset edge of the path
    f = cert.potential - cert.potential[0]
    assert f[1] == pytest.approx(0.5, abs=1e-12)
    assert f[2] == pytest.approx(1.0, abs=1e-12)


def test_boundary_certificate_zero_current():
    grid = build_torus_grid(1, 6, 1, 0.5)
    table = sample_lagrangian(grid, lambda x, v: 0.5 * v * v)
    current = BoundaryCurrent(grid=grid, charges={})
    sol = solve_boundary(table, current)
    cert = certify_boundary(table, current, sol)
    assert np.all(cert.potential == 0.0)
    assert cert.slack_min >= -1e-12


def test_lax_oleinik_kinetic_fixed_point():
    grid = build_torus_grid(1, 8, 1, 0.125)
    table = sample_lagrangian(grid, lambda x, v: 0.5 * v * v)
    f0 = np.zeros(8)
    assert np.allclose(lax_oleinik_backward(f0, table, 0.0), f0, atol=1e-15)
    assert np.allclose(lax_oleinik_forward(f0, table, 0.0), f0, atol=1e-15)


def test_lax_oleinik_certified_potential_is_fixed_point():
    table = two_node_table()
    sol = solve_closed(table)
    cert = certify_closed(table, sol)
    out = lax_oleinik_backward(cert.potential, table, cert.critical_constant)
    assert np.allclose(out, cert.potential, atol=1e-12)
    fwd = lax_oleinik_forward(cert.potential, table, cert.critical_constant)
    # forward mirror is also stationary on this instance
    assert np.allclose(fwd, cert.potential, atol=1e-12)


def test_lax_oleinik_propagates_from_cheap_node():
    # 3-node line (torus), offsets -1/0/+1, L = 1 on moves, 0 at rest, c0 = 0
    grid = build_torus_grid(1, 3, 1, 1.0)
    values = np.tile(np.array([1.0, 0.0, 1.0]), (3, 1))
    table = LagrangianTable(grid=grid, values=values)
    big = 10.0
    f0 = np.array([0.0, big, big])
    out = lax_oleinik_backward(f0, table, 0.0)
    # each node takes min over in-edges: rest keeps f, neighbors of node 0 pay 1
    assert out.tolist() == [0.0, 1.0, 1.0]
    fwd = lax_oleinik_forward(f0, table, 0.0)
    # sup over out-edges of f(head) - cost: node 0 cashes in a neighbor's 10
    # paying 1; nodes 1 and 2 do best by resting on their own value
    assert fwd.tolist() == [big - 1.0, big, big]


def test_lax_oleinik_min_plus_additivity_and_monotonicity():
    rng = np.random.default_rng(9)
    table = random_closed_instance(rng, max_n=16)
    n = table.grid.num_nodes
    f = rng.normal(size=n)
    g = f + rng.uniform(0.0, 1.0, size=n)
    a = 1.7
    assert np.allclose(
        lax_oleinik_backward(f + a, table, 0.3),
        lax_oleinik_backward(f, table, 0.3) + a,
        atol=1e-12,
    )
    assert np.all(
        lax_oleinik_backward(f, table, 0.3) <= lax_oleinik_backward(g, table, 0.3) + 1e-12
    )


def test_weak_kam_two_node_at_critical():
    table = two_node_table()
    res = weak_kam_iterate(table, 2.0)
    assert res.converged
    assert res.iterations <= 2 + 1
    assert res.potential[1] - res.potential[0] == pytest.approx(1.0, abs=1e-12)


def test_weak_kam_above_critical_diverges():
    # c0 = 3 exceeds the critical constant 2: loop reduced cost 2 - 3 < 0
    table = two_node_table()
    res = weak_kam_iterate(table, 3.0)
    assert not res.converged
    assert res.status == "NON_CONVERGED"


def test_weak_kam_slightly_below_critical_converges():
    rng = np.random.default_rng(83)
    for _ in range(5):
        table = random_closed_instance(rng, max_n=20)
        crit = solve_closed(table).value
        res = weak_kam_iterate(table, crit - 1e-6)
        assert res.converged
        assert res.iterations <= table.grid.num_nodes + 1


def test_weak_kam_zero_cost_loops():
    grid = build_torus_grid(1, 5, 1, 0.2)
    table = sample_lagrangian(grid, lambda x, v: v * v)
    res = weak_kam_iterate(table, 0.0)
    assert res.converged
    assert np.all(res.potential == 0.0)


def test_fixed_point_consistency_random():
    # T_backward[f] >= f node-wise, with equality on the projected support
    rng = np.random.default_rng(77)
    for _ in range(15):
        table = random_closed_instance(rng, max_n=32)
        sol = solve_closed(table)
        cert = certify_closed(table, sol)
        out = lax_oleinik_backward(cert.potential, table, cert.critical_constant)
        assert np.min(out - cert.potential) >= -1e-9
        for x in sol.measure.support_nodes():
            assert abs(out[x] - cert.potential[x]) <= 1e-9


def test_weak_kam_output_dual_feasible():
    rng = np.random.default_rng(13)
    for _ in range(10):
        table = random_closed_instance(rng, max_n=24)
        sol = solve_closed(table)
        res = weak_kam_iterate(table, sol.value, max_iters=table.grid.num_nodes + 1)
        assert res.converged
        df = discrete_differential(res.potential, table.grid)
        slack = table.values - sol.value - df
        assert slack.min() >= -1e-9
