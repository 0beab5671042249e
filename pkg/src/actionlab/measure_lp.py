"""Action minimization over closed and boundary-constrained discrete measures.

Two exact combinatorial solvers, per the two feasible sets:

* closed probability measures (circulations of mass one): the optimal value is
  the minimum mean cycle weight of the edge-cost graph, computed with Karp's
  dynamic program; one achieving cycle is extracted deterministically by
  walking tight edges of the reduced costs.
* measures with a prescribed boundary current: uncapacitated min-cost flow
  with node imbalances h*c(x), solved by successive shortest paths after a
  Bellman-Ford negative-cycle pre-check.

Solvers are pure functions of immutable inputs and safe to run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import BoundaryCurrent, DiscreteMeasure, LagrangianTable
from . import network
from .network import INFEASIBLE, OPTIMAL, UNBOUNDED

__all__ = [
    "CLOSED",
    "MinimizationProblem",
    "OptimalSolution",
    "FlowCycle",
    "FlowPath",
    "FlowDecomposition",
    "solve_closed",
    "solve_boundary",
    "decompose",
    "OPTIMAL",
    "UNBOUNDED",
    "INFEASIBLE",
]

CLOSED = "CLOSED"


@dataclass(frozen=True)
class MinimizationProblem:
    """Problem data: a Lagrangian table plus a boundary current or the CLOSED marker."""

    table: LagrangianTable
    current: BoundaryCurrent | None = None  # None means CLOSED
    mass_normalization: float = 1.0

    @property
    def closed(self) -> bool:
        return self.current is None


@dataclass
class OptimalSolution:
    measure: DiscreteMeasure
    value: float
    status: str


@dataclass(frozen=True)
class FlowCycle:
    nodes: tuple  # closed: nodes[0] == nodes[-1]
    edges: tuple  # (node, offset_index) pairs
    weight: float


@dataclass(frozen=True)
class FlowPath:
    nodes: tuple
    edges: tuple
    weight: float


@dataclass(frozen=True)
class FlowDecomposition:
    cycles: tuple
    paths: tuple

    def recompose(self, grid) -> np.ndarray:
        dense = np.zeros((grid.num_nodes, grid.num_offsets))
        for part in list(self.cycles) + list(self.paths):
            for node, m in part.edges:
                dense[node, m] += part.weight
        return dense


def _edge_arrays(table: LagrangianTable):
    grid = table.grid
    n, m = grid.num_nodes, grid.num_offsets
    tails = np.repeat(np.arange(n), m)
    heads = grid.neighbors.ravel()
    costs = table.values.ravel()
    return tails, heads, costs


def solve_closed(table: LagrangianTable) -> OptimalSolution:
    """Minimize the mean action over closed probability measures.

    The feasible set is compact and nonempty (grids always contain cycles), so
    the status is always OPTIMAL.  The returned measure is uniform on one
    minimum-mean cycle; ties are broken by starting a greedy walk at the
    smallest tight edge in (node, offset) order, which makes the output
    deterministic.
    """
    grid = table.grid
    tails, heads, costs = _edge_arrays(table)
    lam = network.karp_minimum_mean_cycle(grid.num_nodes, tails, heads, costs)
    if lam is None:
        raise RuntimeError("phase grid produced an acyclic graph; solver bug")

    cycle_edges = _extract_tight_cycle(grid, tails, heads, costs, lam)
    weight = 1.0 / len(cycle_edges)
    measure = DiscreteMeasure(
        grid=grid, weights={edge: weight for edge in cycle_edges}
    )
    value = float(np.mean([table.values[e] for e in cycle_edges]))
    return OptimalSolution(measure=measure, value=value, status=OPTIMAL)


def _extract_tight_cycle(grid, tails, heads, costs, lam) -> list[tuple[int, int]]:
    """One minimum-mean cycle, as edges (node, offset_index).

    Every cycle made of tight edges of the reduced costs h*(L - lam) has total
    reduced cost zero, hence mean cost lam; walking tight edges greedily from
    the smallest tight edge that lies on a cycle therefore lands on an optimal
    cycle after at most num_nodes steps.
    """
    h = grid.time_step
    red = h * (costs - lam)
    scale = max(1.0, float(np.max(np.abs(red))))
    pot, ok = network.relax_to_fixpoint(
        grid.num_nodes, tails, heads, red, tol=1e-12 * scale * grid.num_nodes
    )
    if not ok:
        raise RuntimeError(
            "reduced costs admit a negative cycle at the computed critical "
            "constant; solver bug"
        )
    slack = pot[tails] + red - pot[heads]
    eps = 1e-11 * max(scale, float(np.max(np.abs(pot))), 1.0)
    tight = slack <= eps

    t_idx = np.flatnonzero(tight)
    comp = network.strongly_connected_components(
        grid.num_nodes, tails[t_idx], heads[t_idx]
    )
    # keep tight edges whose endpoints share a tight-subgraph component
    cyclic = t_idx[comp[tails[t_idx]] == comp[heads[t_idx]]]
    if len(cyclic) == 0:
        raise RuntimeError("no tight cycle found; solver bug")

    m = grid.num_offsets
    out: dict[int, list[int]] = {}
    for e in cyclic:  # ascending edge ids = (node, offset) lexicographic order
        out.setdefault(int(tails[e]), []).append(int(e))

    e0 = int(cyclic[0])
    want_comp = comp[tails[e0]]
    v = int(tails[e0])
    seen: dict[int, int] = {}
    walk: list[int] = []
    while v not in seen:
        seen[v] = len(walk)
        e = next(ei for ei in out[v] if comp[heads[ei]] == want_comp)
        walk.append(e)
        v = int(heads[e])
    cycle = walk[seen[v]:]
    return [(int(e) // m, int(e) % m) for e in cycle]


def solve_boundary(table: LagrangianTable, current: BoundaryCurrent) -> OptimalSolution:
    """Minimize the action over measures with the prescribed boundary current.

    UNBOUNDED whenever any negative-cost directed cycle exists (adding that
    circulation preserves the boundary and lowers the cost without limit);
    INFEASIBLE when supply cannot reach demand; otherwise the min-cost flow
    with node imbalances h*c(x).
    """
    grid = table.grid
    if not grid.same_layout(current.grid):
        raise ValueError("Lagrangian table and current live on different grids")
    tails, heads, costs = _edge_arrays(table)
    b = grid.time_step * current.to_dense()

    result = network.min_cost_flow(grid.num_nodes, tails, heads, costs, b)
    if result.status != OPTIMAL:
        empty = DiscreteMeasure(grid=grid, weights={})
        return OptimalSolution(measure=empty, value=result.value, status=result.status)

    m = grid.num_offsets
    drop = 1e-12 * max(1.0, float(np.sum(np.abs(b))))
    weights = {
        (int(e) // m, int(e) % m): float(w)
        for e, w in enumerate(result.flow)
        if w > drop
    }
    measure = DiscreteMeasure(grid=grid, weights=weights)
    value = float(sum(table.values[edge] * w for edge, w in weights.items()))
    return OptimalSolution(measure=measure, value=value, status=OPTIMAL)


def decompose(mu: DiscreteMeasure) -> FlowDecomposition:
    """Split a measure into weighted cycles and source-to-sink paths.

    Standard flow decomposition: paths drain the boundary charges first, the
    remaining circulation is peeled into cycles.  Everything subtracted from
    the measure is recorded, so edge-wise recomposition reproduces the input
    up to roundoff.
    """
    grid = mu.grid
    remaining: dict[tuple[int, int], float] = dict(sorted(mu.weights.items()))
    scale = max(remaining.values(), default=0.0)
    tol = 1e-12 * max(1.0, scale)

    cycles: list[FlowCycle] = []
    paths: list[FlowPath] = []
    guard = 4 * (len(remaining) + grid.num_nodes + 2)

    def excess() -> dict[int, float]:
        ex: dict[int, float] = {}
        for (node, m), w in remaining.items():
            head = int(grid.neighbors[node, m])
            ex[node] = ex.get(node, 0.0) + w
            ex[head] = ex.get(head, 0.0) - w
        return ex

    def out_edge(v: int):
        for node, m in remaining:
            if node == v:
                return (node, m)
        return None

    def subtract(edges: list[tuple[int, int]], amount: float):
        for e in edges:
            left = remaining[e] - amount
            if left <= tol:
                del remaining[e]
            else:
                remaining[e] = left

    for _ in range(guard):
        ex = excess()
        sources = sorted(x for x, v in ex.items() if v > tol)
        if not sources:
            break
        s = sources[0]
        walk_nodes = [s]
        walk_edges: list[tuple[int, int]] = []
        pos = {s: 0}
        v = s
        closed_path = False
        while True:
            e = out_edge(v)
            if e is None:
                closed_path = True  # boundary-tolerance dead end; drain what we have
                break
            head = int(grid.neighbors[e])
            walk_edges.append(e)
            if head in pos:
                i = pos[head]
                cyc_edges = walk_edges[i:]
                peel = min(remaining[c] for c in cyc_edges)
                subtract(cyc_edges, peel)
                cycles.append(
                    FlowCycle(
                        nodes=tuple(walk_nodes[i:] + [head]),
                        edges=tuple(cyc_edges),
                        weight=peel,
                    )
                )
                closed_path = False
                break
            walk_nodes.append(head)
            pos[head] = len(walk_nodes) - 1
            if ex.get(head, 0.0) < -tol:
                peel = min(
                    ex[s], -ex[head], min(remaining[c] for c in walk_edges)
                )
                subtract(walk_edges, peel)
                paths.append(
                    FlowPath(nodes=tuple(walk_nodes), edges=tuple(walk_edges), weight=peel)
                )
                break
            v = head
        if closed_path and walk_edges:
            peel = min(ex[s], min(remaining[c] for c in walk_edges))
            if peel > 0:
                subtract(walk_edges, peel)
                paths.append(
                    FlowPath(nodes=tuple(walk_nodes), edges=tuple(walk_edges), weight=peel)
                )
    else:
        raise RuntimeError("decompose failed to drain boundary charges; solver bug")

    for _ in range(guard):
        if not remaining:
            break
        start = min(node for node, _m in remaining)
        walk_nodes = [start]
        walk_edges = []
        pos = {start: 0}
        v = start
        while True:
            e = out_edge(v)
            if e is None:
                # dangling roundoff dust: circulations always continue
                remaining.pop(walk_edges[-1], None)
                break
            head = int(grid.neighbors[e])
            walk_edges.append(e)
            if head in pos:
                i = pos[head]
                cyc_edges = walk_edges[i:]
                peel = min(remaining[c] for c in cyc_edges)
                subtract(cyc_edges, peel)
                cycles.append(
                    FlowCycle(
                        nodes=tuple(walk_nodes[i:] + [head]),
                        edges=tuple(cyc_edges),
                        weight=peel,
                    )
                )
                break
            walk_nodes.append(head)
            pos[head] = len(walk_nodes) - 1
            v = head
    else:
        raise RuntimeError("decompose failed to peel circulation; solver bug")

    return FlowDecomposition(cycles=tuple(cycles), paths=tuple(paths))
