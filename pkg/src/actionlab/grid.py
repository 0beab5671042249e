"""Discrete phase space on the flat torus: grids, Lagrangian tables, measures, currents.

The torus [0,1)^d (d in {1,2}) is sampled with n nodes per axis, spacing
dx = 1/n.  Admissible motions form a finite stencil of integer offsets k with
|k|_inf <= K, so every edge (node, offset) lands exactly on another grid node
after one time step h, with velocity v = k*dx/h.  Forcing velocities to be
grid-compatible makes the boundary condition on measures a finite linear
constraint with no interpolation error.

All types are immutable after construction and safe to share for concurrent
reads; construction is single-threaded.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "PhaseGrid",
    "LagrangianTable",
    "DiscreteMeasure",
    "BoundaryCurrent",
    "build_torus_grid",
    "sample_lagrangian",
    "discrete_differential",
    "boundary_of_measure",
]

# Absolute floor for the zero-total-charge check; scaled by the charge size.
CHARGE_BALANCE_TOL = 1e-12


@dataclass(frozen=True)
class PhaseGrid:
    """Periodic spatial grid plus velocity stencil defining the discrete phase space.

    Edges are pairs (node, offset_index).  The edge with tail node ``x`` and
    integer offset ``k`` has head ``x (+) k*dx`` (periodic wraparound) and
    velocity ``k*dx/h``.  Offsets are stored sorted lexicographically, which
    fixes a global deterministic edge order ``edge_id = node*num_offsets + offset_index``.
    """

    dim: int
    nodes_per_dim: int
    stencil_radius: int
    time_step: float
    offsets: np.ndarray = field(repr=False, compare=False)  # (M, dim) int
    neighbors: np.ndarray = field(repr=False, compare=False)  # (N, M) int
    positions: np.ndarray = field(repr=False, compare=False)  # (N, dim) float
    velocities: np.ndarray = field(repr=False, compare=False)  # (M, dim) float

    @property
    def spacing(self) -> float:
        return 1.0 / self.nodes_per_dim

    @property
    def num_nodes(self) -> int:
        return self.nodes_per_dim**self.dim

    @property
    def num_offsets(self) -> int:
        return (2 * self.stencil_radius + 1) ** self.dim

    @property
    def num_edges(self) -> int:
        return self.num_nodes * self.num_offsets

    @property
    def zero_offset_index(self) -> int:
        # Offsets are sorted, so the zero vector sits exactly in the middle.
        return (self.num_offsets - 1) // 2

    def node_coords(self, node: int) -> tuple[int, ...]:
        """Integer lattice coordinates of a node index."""
        n = self.nodes_per_dim
        if self.dim == 1:
            return (node,)
        return (node // n, node % n)

    def coords_to_node(self, coords) -> int:
        n = self.nodes_per_dim
        coords = [int(c) % n for c in np.atleast_1d(coords)]
        if self.dim == 1:
            return coords[0]
        return coords[0] * n + coords[1]

    def position(self, node: int):
        """Position of a node; a scalar for d=1, a length-2 array for d=2."""
        p = self.positions[node]
        return float(p[0]) if self.dim == 1 else p

    def velocity(self, offset_index: int):
        v = self.velocities[offset_index]
        return float(v[0]) if self.dim == 1 else v

    def offset_index(self, offset) -> int:
        """Index of an integer offset vector in the sorted stencil."""
        k = np.atleast_1d(np.asarray(offset, dtype=int))
        K = self.stencil_radius
        if np.any(np.abs(k) > K):
            raise ValueError(f"offset {tuple(k)} outside stencil radius {K}")
        idx = 0
        for c in k:
            idx = idx * (2 * K + 1) + (int(c) + K)
        return idx

    def same_layout(self, other: "PhaseGrid") -> bool:
        return (
            self.dim == other.dim
            and self.nodes_per_dim == other.nodes_per_dim
            and self.stencil_radius == other.stencil_radius
            and self.time_step == other.time_step
        )


def build_torus_grid(d: int, n: int, stencil_radius: int, h: float) -> PhaseGrid:
    """Build the phase grid for the d-torus with n nodes per axis.

    The stencil is the full box of integer offsets with |k|_inf <= stencil_radius;
    it always contains the zero offset (rest is representable) and is symmetric
    under negation (needed for the forward/backward value-update pair).
    """
    if d not in (1, 2):
        raise ValueError(f"dimension must be 1 or 2, got {d}")
    if n < 2:
        raise ValueError(f"need at least 2 nodes per axis, got {n}")
    if stencil_radius < 1:
        raise ValueError(f"stencil radius must be >= 1, got {stencil_radius}")
    if not (h > 0):
        raise ValueError(f"time step must be positive, got {h}")

    K = stencil_radius
    offsets = np.array(
        sorted(itertools.product(range(-K, K + 1), repeat=d)), dtype=int
    )
    num_nodes = n**d
    dx = 1.0 / n

    if d == 1:
        base = np.arange(num_nodes)[:, None]
        neighbors = (base + offsets[None, :, 0]) % n
        positions = (np.arange(num_nodes) * dx)[:, None]
    else:
        rows = np.arange(num_nodes) // n
        cols = np.arange(num_nodes) % n
        nr = (rows[:, None] + offsets[None, :, 0]) % n
        nc = (cols[:, None] + offsets[None, :, 1]) % n
        neighbors = nr * n + nc
        positions = np.stack([rows * dx, cols * dx], axis=1)

    velocities = offsets * dx / h
    grid = PhaseGrid(
        dim=d,
        nodes_per_dim=n,
        stencil_radius=K,
        time_step=h,
        offsets=offsets,
        neighbors=neighbors.astype(int),
        positions=positions.astype(float),
        velocities=velocities.astype(float),
    )
    return grid


@dataclass(frozen=True)
class LagrangianTable:
    """Sampled Lagrangian values L(x, v), one per edge of the grid."""

    grid: PhaseGrid
    values: np.ndarray = field(repr=False, compare=False)  # (N, M) float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.num_nodes, self.grid.num_offsets):
            raise ValueError(
                f"values shape {vals.shape} does not match grid "
                f"({self.grid.num_nodes} nodes x {self.grid.num_offsets} offsets)"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("Lagrangian table contains non-finite values")
        object.__setattr__(self, "values", vals)


def sample_lagrangian(grid: PhaseGrid, lagrangian: Callable) -> LagrangianTable:
    """Tabulate L(tail position, edge velocity) on every edge.

    The callback receives scalars for d=1 and length-d arrays for d=2.  A
    non-finite output raises with the offending edge identified.
    """
    values = np.empty((grid.num_nodes, grid.num_offsets))
    for x in range(grid.num_nodes):
        pos = grid.position(x)
        for m in range(grid.num_offsets):
            val = lagrangian(pos, grid.velocity(m))
            values[x, m] = val
            if not np.isfinite(values[x, m]):
                raise ValueError(
                    f"Lagrangian returned non-finite value {val!r} at node {x} "
                    f"(x={pos}), offset {tuple(grid.offsets[m])}"
                )
    return LagrangianTable(grid=grid, values=values)


def discrete_differential(f, grid: PhaseGrid) -> np.ndarray:
    """Edge-wise difference quotient df(x, v) = (f(x (+) h v) - f(x)) / h.

    Linear in f; identically zero on constants.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.num_nodes,):
        raise ValueError(f"potential must have one value per node, got shape {f.shape}")
    return (f[grid.neighbors] - f[:, None]) / grid.time_step


@dataclass(frozen=True)
class DiscreteMeasure:
    """Nonnegative edge weights; a measure on the discrete tangent bundle.

    Stored sparsely: ``weights`` maps (node, offset_index) to a positive weight.
    """

    grid: PhaseGrid
    weights: dict = field(repr=False, compare=False)

    def __post_init__(self):
        clean = {}
        for (node, m), w in self.weights.items():
            w = float(w)
            if w < 0:
                raise ValueError(f"negative weight {w} on edge ({node}, {m})")
            if not np.isfinite(w):
                raise ValueError(f"non-finite weight on edge ({node}, {m})")
            if w > 0.0:
                clean[(int(node), int(m))] = w
        object.__setattr__(self, "weights", clean)

    @property
    def mass(self) -> float:
        return float(sum(self.weights.values()))

    def support_nodes(self) -> list[int]:
        """Sorted projected support pi(supp mu)."""
        return sorted({node for (node, _m) in self.weights})

    def supported_offsets(self, node: int) -> list[int]:
        return sorted(m for (x, m) in self.weights if x == node)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.grid.num_nodes, self.grid.num_offsets))
        for (node, m), w in self.weights.items():
            dense[node, m] = w
        return dense


@dataclass(frozen=True)
class BoundaryCurrent:
    """Signed node charges; the discrete boundary of a measure.

    A current is a boundary iff its charges sum to zero, which is enforced here
    up to roundoff.
    """

    grid: PhaseGrid
    charges: dict = field(repr=False, compare=False)

    def __post_init__(self):
        clean = {int(x): float(c) for x, c in self.charges.items() if c != 0.0}
        total = sum(clean.values())
        scale = sum(abs(c) for c in clean.values())
        if abs(total) > CHARGE_BALANCE_TOL * max(1.0, scale):
            raise ValueError(
                f"boundary charges must sum to zero, got total {total:g}"
            )
        object.__setattr__(self, "charges", clean)

    def charge(self, node: int) -> float:
        return self.charges.get(node, 0.0)

    def support(self) -> list[int]:
        return sorted(self.charges)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.grid.num_nodes)
        for x, c in self.charges.items():
            dense[x] = c
        return dense

    def pairing(self, f) -> float:
        """<c, f> = sum_x c(x) f(x)."""
        f = np.asarray(f, dtype=float)
        return float(sum(c * f[x] for x, c in self.charges.items()))


def boundary_of_measure(mu: DiscreteMeasure) -> BoundaryCurrent:
    """Node charges (inflow - outflow)/h of a measure.

    Satisfies the summation-by-parts identity
    sum_e mu(e) df(e) = sum_x charges(x) f(x) for every potential f, so a
    node-balanced measure (circulation) has zero boundary.
    """
    grid = mu.grid
    h = grid.time_step
    charges: dict[int, float] = {}
    for (node, m), w in mu.weights.items():
        head = int(grid.neighbors[node, m])
        charges[head] = charges.get(head, 0.0) + w / h
        charges[node] = charges.get(node, 0.0) - w / h
    return BoundaryCurrent(grid=grid, charges=charges)
