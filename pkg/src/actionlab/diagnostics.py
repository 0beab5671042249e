"""Numerical verification of the optimality structure: energy conservation,
decomposition residuals, and momentum regularity on the projected support.

Every check reports a residual instead of asserting, so failed runs still
produce a full report.  Distances on the torus use the l-infinity wraparound
metric, which only rescales Lipschitz constants relative to any equivalent
choice and keeps index arithmetic exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import (
    BoundaryCurrent,
    DiscreteMeasure,
    LagrangianTable,
    PhaseGrid,
    boundary_of_measure,
    discrete_differential,
)
from .certificates import DualCertificate
from .convexify import FiberEnvelope, momentum_field

__all__ = [
    "DiagnosticsReport",
    "discrete_hamiltonian",
    "check_energy_conservation",
    "estimate_momentum_lipschitz",
    "torus_distance",
    "full_report",
]


@dataclass
class DiagnosticsReport:
    hamiltonian_residual_max: float
    slack_min: float
    slack_on_support_max: float
    duality_gap: float
    momentum_lipschitz_estimate: float
    boundary_residual_max: float
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "hamiltonian_residual_max": self.hamiltonian_residual_max,
            "slack_min": self.slack_min,
            "slack_on_support_max": self.slack_on_support_max,
            "duality_gap": self.duality_gap,
            "momentum_lipschitz_estimate": self.momentum_lipschitz_estimate,
            "boundary_residual_max": self.boundary_residual_max,
        }


def discrete_hamiltonian(table: LagrangianTable, x: int, p) -> float:
    """H(x, p) = max over the stencil of p(v) - L(x, v).

    ``p`` holds one covector value per stencil offset (the edge-wise pairing
    p(v), e.g. a row of a discrete differential).
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (table.grid.num_offsets,):
        raise ValueError("p must supply one value per stencil offset")
    return float(np.max(p - table.values[x]))


def check_energy_conservation(
    table: LagrangianTable, cert: DualCertificate, mu: DiscreteMeasure
) -> float:
    """max over support nodes of |H(x, df_x) + c0|.

    Since H(x, df_x) + c0 = -min over the fiber of the slack g(x, .), this
    residual is bounded by the largest slack on the support, hence vanishes
    for exact optima: the discrete energy conservation principle.
    """
    df = discrete_differential(cert.potential, table.grid)
    worst = 0.0
    for x in mu.support_nodes():
        ham = discrete_hamiltonian(table, x, df[x])
        worst = max(worst, abs(ham + cert.critical_constant))
    return worst


def torus_distance(grid: PhaseGrid, x: int, y: int) -> float:
    """l-infinity wraparound distance between two nodes."""
    px, py = grid.positions[x], grid.positions[y]
    delta = np.abs(px - py)
    delta = np.minimum(delta, 1.0 - delta)
    return float(delta.max())


def estimate_momentum_lipschitz(momenta: dict, grid: PhaseGrid, exclusion=()) -> float:
    """max over node pairs outside the exclusion set of |p(x) - p(y)| / dist(x, y).

    ``momenta`` maps node -> covector (scalar for d=1).  Returns 0 with fewer
    than two usable nodes.  Enlarging the exclusion set can only shrink the
    estimate.
    """
    excl = set(exclusion)
    nodes = sorted(x for x in momenta if x not in excl)
    if len(nodes) < 2:
        return 0.0
    vals = [np.atleast_1d(np.asarray(momenta[x], dtype=float)) for x in nodes]
    best = 0.0
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            dist = torus_distance(grid, nodes[i], nodes[j])
            if dist == 0.0:
                continue
            diff = float(np.max(np.abs(vals[i] - vals[j])))
            best = max(best, diff / dist)
    return best


def full_report(
    table: LagrangianTable,
    solution,
    cert: DualCertificate,
    envelope: FiberEnvelope,
    current: BoundaryCurrent | None = None,
) -> DiagnosticsReport:
    """Aggregate verification of one solved instance.

    ``current`` is the problem's boundary data (None for the closed case);
    it enters the duality gap through the pairing <c, f> and the boundary
    residual.  Inputs must share one grid.
    """
    grid = table.grid
    for other in (solution.measure.grid, cert.grid, envelope.grid):
        if not grid.same_layout(other):
            raise ValueError("inputs live on different grids")
    if current is not None and not grid.same_layout(current.grid):
        raise ValueError("inputs live on different grids")

    mu = solution.measure
    mass = mu.mass
    slack_min = cert.slack_min
    slack_support = cert.slack_on_support(mu)

    action = float(sum(table.values[e] * w for e, w in mu.weights.items()))
    pairing = current.pairing(cert.potential) if current is not None else 0.0
    duality_gap = abs(action - (cert.critical_constant * mass + pairing))

    energy = check_energy_conservation(table, cert, mu)

    bm = boundary_of_measure(mu)
    target = current.to_dense() if current is not None else np.zeros(grid.num_nodes)
    boundary_residual = float(np.max(np.abs(bm.to_dense() - target))) if grid.num_nodes else 0.0

    momenta_info = momentum_field(envelope, mu)
    usable = {
        x: info.momentum
        for x, info in momenta_info.items()
        if not info.any_endpoint
    }
    exclusion = set(current.support()) if current is not None else set()
    lip = estimate_momentum_lipschitz(usable, grid, exclusion)

    df = discrete_differential(cert.potential, grid)
    h_resid = np.max(df - table.values, axis=1) + cert.critical_constant
    support_nodes = set(mu.support_nodes())
    rows = []
    for x in range(grid.num_nodes):
        info = momenta_info.get(x)
        rows.append(
            {
                "node": x,
                "f": float(cert.potential[x]),
                "momentum": None if info is None else info.momentum,
                "momentum_spread": None if info is None else info.spread,
                "H_residual": float(h_resid[x]),
                "on_support": x in support_nodes,
            }
        )

    return DiagnosticsReport(
        hamiltonian_residual_max=energy,
        slack_min=slack_min,
        slack_on_support_max=slack_support,
        duality_gap=duality_gap,
        momentum_lipschitz_estimate=lip,
        boundary_residual_max=boundary_residual,
        details={"nodes": rows},
    )
