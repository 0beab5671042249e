"""Dual certificates: the decomposition L = c0 + df + g and its fixed-point route.

A certificate consists of a node potential f, the critical constant c0, and
the edge slack g defined exactly by g = L - c0 - df.  Dual feasibility is
g >= 0 everywhere; complementary slackness forces g = 0 on the support of any
optimal measure.  In this finite setting the decomposition is exact, with no
limiting sequence.

The same potential can be reached as a fixed point of the backward value
update (one-step inf-convolution with the reduced cost), which is what
``weak_kam_iterate`` does.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import BoundaryCurrent, DiscreteMeasure, LagrangianTable, discrete_differential
from . import network
from .network import OPTIMAL

__all__ = [
    "DualCertificate",
    "WeakKamResult",
    "certify_closed",
    "certify_boundary",
    "lax_oleinik_backward",
    "lax_oleinik_forward",
    "weak_kam_iterate",
]

CONVERGED = "CONVERGED"
NON_CONVERGED = "NON_CONVERGED"


@dataclass(frozen=True)
class DualCertificate:
    """Potential f on nodes, critical constant c0, and slack g = L - c0 - df."""

    grid: object
    potential: np.ndarray = field(repr=False, compare=False)  # (N,)
    slack: np.ndarray = field(repr=False, compare=False)  # (N, M)
    critical_constant: float = 0.0
    normalization_node: int = 0
    current_pairing: float = 0.0  # <c, f>; zero in the closed case

    @property
    def slack_min(self) -> float:
        return float(self.slack.min())

    def slack_on_support(self, mu: DiscreteMeasure) -> float:
        if not mu.weights:
            return 0.0
        return float(max(self.slack[edge] for edge in mu.weights))


def _finish_certificate(table, pot, c0, normalization_node, pairing=0.0):
    f = pot - pot[normalization_node]
    df = discrete_differential(f, table.grid)
    g = table.values - c0 - df
    return DualCertificate(
        grid=table.grid,
        potential=f,
        critical_constant=float(c0),
        slack=g,
        normalization_node=int(normalization_node),
        current_pairing=float(pairing),
    )


def certify_closed(table: LagrangianTable, solution) -> DualCertificate:
    """Certificate for a closed-case optimum: c0 = value, f from shortest walks.

    The potential is the virtual-source Bellman-Ford fixpoint of the reduced
    edge weights h*(L - c0), normalized to vanish at the smallest node of the
    projected support.  Along any cycle of total reduced weight zero the
    shortest-walk inequalities telescope to equalities, so the slack vanishes
    on the support of every optimal measure, not just the one supplied.
    """
    if solution.status != OPTIMAL:
        raise ValueError(f"cannot certify a solution with status {solution.status}")
    grid = table.grid
    c0 = solution.value
    n, m = grid.num_nodes, grid.num_offsets
    tails = np.repeat(np.arange(n), m)
    heads = grid.neighbors.ravel()
    red = grid.time_step * (table.values.ravel() - c0)
    scale = max(1.0, float(np.max(np.abs(red))))
    pot, ok = network.relax_to_fixpoint(n, tails, heads, red, tol=1e-12 * scale * n)
    if not ok:
        raise RuntimeError(
            "reduced costs admit a negative cycle; the supplied value is not "
            "the critical constant (solver bug)"
        )
    support = solution.measure.support_nodes()
    norm_node = support[0] if support else 0
    return _finish_certificate(table, pot, c0, norm_node)


def certify_boundary(
    table: LagrangianTable, current: BoundaryCurrent, solution
) -> DualCertificate:
    """Certificate for a boundary-case optimum, in the c0-absorbed form (c0 = 0).

    Potentials are shortest-walk values on the residual graph of the optimal
    flow (forward arcs at cost h*L, backward arcs at -h*L on the support), so
    L >= df everywhere with equality on the support.  A negative residual
    cycle means the input was not optimal and is reported as a fault.  Also
    records the pairing <c, f>, which equals the optimal value exactly.
    """
    if solution.status != OPTIMAL:
        raise ValueError(f"cannot certify a solution with status {solution.status}")
    grid = table.grid
    n, m = grid.num_nodes, grid.num_offsets
    h = grid.time_step

    fwd_tails = np.repeat(np.arange(n), m)
    fwd_heads = grid.neighbors.ravel()
    fwd_costs = h * table.values.ravel()
    back_tails = []
    back_heads = []
    back_costs = []
    for (node, k), _w in sorted(solution.measure.weights.items()):
        back_tails.append(int(grid.neighbors[node, k]))
        back_heads.append(node)
        back_costs.append(-h * table.values[node, k])
    tails = np.concatenate([fwd_tails, np.array(back_tails, dtype=int)])
    heads = np.concatenate([fwd_heads, np.array(back_heads, dtype=int)])
    costs = np.concatenate([fwd_costs, np.array(back_costs, dtype=float)])

    scale = max(1.0, float(np.max(np.abs(costs))))
    pot, ok = network.relax_to_fixpoint(n, tails, heads, costs, tol=1e-11 * scale * n)
    if not ok:
        raise RuntimeError(
            "residual graph has a negative cycle: the supplied solution is "
            "not optimal"
        )
    support = solution.measure.support_nodes()
    norm_node = support[0] if support else 0
    f = pot - pot[norm_node]
    pairing = current.pairing(f)
    return _finish_certificate(table, pot, 0.0, norm_node, pairing=pairing)


def lax_oleinik_backward(f0, table: LagrangianTable, c0: float) -> np.ndarray:
    """One backward value-update step: T[f](x) = min over in-edges (y -> x) of
    f(y) + h*(L - c0).

    Order preserving and min-plus linear: T[f + a] = T[f] + a.
    """
    grid = table.grid
    f0 = np.asarray(f0, dtype=float)
    step = grid.time_step * (table.values - c0)
    out = np.full(grid.num_nodes, np.inf)
    cand = f0[:, None] + step
    np.minimum.at(out, grid.neighbors.ravel(), cand.ravel())
    return out


def lax_oleinik_forward(f0, table: LagrangianTable, c0: float) -> np.ndarray:
    """Mirror step: T[f](x) = max over out-edges (x -> y) of f(y) - h*(L - c0)."""
    grid = table.grid
    f0 = np.asarray(f0, dtype=float)
    step = grid.time_step * (table.values - c0)
    return np.max(f0[grid.neighbors] - step, axis=1)


@dataclass
class WeakKamResult:
    potential: np.ndarray
    converged: bool
    iterations: int

    @property
    def status(self) -> str:
        return CONVERGED if self.converged else NON_CONVERGED


def weak_kam_iterate(
    table: LagrangianTable, c0: float, max_iters: int | None = None
) -> WeakKamResult:
    """Fixed-point route to a dual-feasible potential: f <- min(f, T_backward[f]).

    Starting from f = 0, the iteration stabilizes within num_nodes sweeps iff
    the reduced costs L - c0 carry no negative-mean cycle (c0 at most the
    critical constant); a negative reduced cycle drives f to -inf, reported as
    NON_CONVERGED via the iteration count.  The limit satisfies L >= c0 + df.
    """
    grid = table.grid
    if max_iters is None:
        max_iters = grid.num_nodes + 1
    f = np.zeros(grid.num_nodes)
    for it in range(1, max_iters + 1):
        new = np.minimum(f, lax_oleinik_backward(f, table, c0))
        if np.array_equal(new, f):
            return WeakKamResult(potential=f, converged=True, iterations=it)
        f = new
    return WeakKamResult(potential=f, converged=False, iterations=max_iters)
