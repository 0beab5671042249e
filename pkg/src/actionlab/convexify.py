"""Fiberwise lower convex envelopes of sampled Lagrangians and their derivatives.

The envelope on each fiber is the supremum of affine minorants of the sampled
points, equivalently the minimum over convex combinations of samples that
represent the evaluation velocity.  Stencils are tiny (at most 25 points), so
the d=2 hull is computed by brute force over singleton / segment / triangle
supports with exact integer barycentric precomputation, shared across all
fibers and cached per stencil radius.

Fibers are independent; everything here is pure.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .grid import DiscreteMeasure, LagrangianTable, PhaseGrid

__all__ = [
    "FiberEnvelope",
    "FiberDerivative",
    "NodeMomentum",
    "fiber_convex_envelope",
    "envelope_fiber_derivative",
    "momentum_field",
    "momentum_at",
]


@dataclass(frozen=True)
class FiberEnvelope:
    """Envelope values plus one-sided fiber slopes on every edge.

    ``grad_lo`` / ``grad_hi`` hold the backward / forward difference quotients
    of the envelope along each velocity axis (copied one-sided at the stencil
    boundary, where ``endpoint`` is set).  ``grad`` is their midpoint, the
    deterministic subgradient selection used for momenta.
    """

    grid: PhaseGrid
    values: np.ndarray = field(repr=False, compare=False)  # (N, M)
    grad: np.ndarray = field(repr=False, compare=False)  # (N, M, d)
    grad_lo: np.ndarray = field(repr=False, compare=False)  # (N, M, d)
    grad_hi: np.ndarray = field(repr=False, compare=False)  # (N, M, d)
    endpoint: np.ndarray = field(repr=False, compare=False)  # (N, M) bool


@dataclass(frozen=True)
class FiberDerivative:
    momentum: object  # float for d=1, length-2 array for d=2
    width: float  # half the gap between one-sided slopes; 0 iff differentiable
    is_endpoint: bool


@dataclass(frozen=True)
class NodeMomentum:
    node: int
    derivatives: tuple  # (offset_index, FiberDerivative) pairs
    spread: float  # max pairwise distance between the momenta
    momentum: object  # mean momentum, the per-node selection
    any_endpoint: bool


def _lower_hull_1d(y: np.ndarray) -> np.ndarray:
    """Lower convex hull values of points (i, y[i]) at every integer i."""
    m = len(y)
    hull = [0]
    for i in range(1, m):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # pop b when it is not strictly below the chord a -> i
            if (b - a) * (y[i] - y[a]) - (y[b] - y[a]) * (i - a) <= 0.0:
                hull.pop()
            else:
                break
        hull.append(i)
    env = np.empty(m)
    for p, q in zip(hull[:-1], hull[1:]):
        slope = (y[q] - y[p]) / (q - p)
        for i in range(p, q + 1):
            env[i] = y[p] + slope * (i - p)
    env[hull[0]] = y[hull[0]]
    env[hull[-1]] = y[hull[-1]]
    return env


_SUPPORT_CACHE: dict[int, list[tuple[np.ndarray, np.ndarray]]] = {}


def _supports_2d(radius: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per stencil point: (index array (C,3), weight array (C,3)) of all
    singleton / segment / triangle convex representations, integer-exact."""
    if radius in _SUPPORT_CACHE:
        return _SUPPORT_CACHE[radius]
    pts = np.array(
        sorted(itertools.product(range(-radius, radius + 1), repeat=2)), dtype=int
    )
    m = len(pts)
    out = []
    for t in range(m):
        p = pts[t]
        idx_rows = [(t, t, t)]
        wt_rows = [(1.0, 0.0, 0.0)]
        for i, j in itertools.combinations(range(m), 2):
            d = pts[j] - pts[i]
            r = p - pts[i]
            if d[0] * r[1] - d[1] * r[0] != 0:
                continue
            denom = int(d[0] ** 2 + d[1] ** 2)
            num = int(r[0] * d[0] + r[1] * d[1])
            if 0 < num < denom:
                lam = num / denom
                idx_rows.append((i, j, i))
                wt_rows.append((1.0 - lam, lam, 0.0))
        for i, j, k in itertools.combinations(range(m), 3):
            u = pts[j] - pts[i]
            v = pts[k] - pts[i]
            det = int(u[0] * v[1] - u[1] * v[0])
            if det == 0:
                continue
            r = p - pts[i]
            lj = (r[0] * v[1] - r[1] * v[0]) / det
            lk = (u[0] * r[1] - u[1] * r[0]) / det
            li = 1.0 - lj - lk
            if lj > 0.0 and lk > 0.0 and li > 0.0:
                idx_rows.append((i, j, k))
                wt_rows.append((li, lj, lk))
        out.append((np.array(idx_rows, dtype=int), np.array(wt_rows)))
    _SUPPORT_CACHE[radius] = out
    return out


def fiber_convex_envelope(table: LagrangianTable) -> FiberEnvelope:
    """Lower convex envelope of each fiber's sampled points.

    d=1 uses a monotone-chain hull per fiber; d=2 minimizes over the cached
    convex representations of each stencil point.  The result dominates every
    affine minorant of the samples and is idempotent.
    """
    grid = table.grid
    n, m = grid.num_nodes, grid.num_offsets
    y = table.values
    env = np.empty_like(y)

    if grid.dim == 1:
        for x in range(n):
            env[x] = _lower_hull_1d(y[x])
    else:
        supports = _supports_2d(grid.stencil_radius)
        for t in range(m):
            idx, wts = supports[t]
            cand = np.einsum("nck,ck->nc", y[:, idx], wts)
            env[:, t] = cand.min(axis=1)

    return _fiber_slopes(grid, env)


def _fiber_slopes(grid: PhaseGrid, env: np.ndarray) -> FiberEnvelope:
    n, m = grid.num_nodes, grid.num_offsets
    d = grid.dim
    dv = grid.spacing / grid.time_step
    K = grid.stencil_radius
    side = 2 * K + 1

    lo = np.empty((n, m, d))
    hi = np.empty((n, m, d))
    if d == 1:
        diffs = np.diff(env, axis=1) / dv
        lo[:, 1:, 0] = diffs
        hi[:, :-1, 0] = diffs
        lo[:, 0, 0] = hi[:, 0, 0]
        hi[:, -1, 0] = lo[:, -1, 0]
        endpoint = np.zeros((n, m), dtype=bool)
        endpoint[:, 0] = endpoint[:, -1] = True
    else:
        cube = env.reshape(n, side, side)
        for axis in range(2):
            dif = np.diff(cube, axis=1 + axis) / dv
            lo_a = np.empty((n, side, side))
            hi_a = np.empty((n, side, side))
            if axis == 0:
                lo_a[:, 1:, :] = dif
                hi_a[:, :-1, :] = dif
                lo_a[:, 0, :] = hi_a[:, 0, :]
                hi_a[:, -1, :] = lo_a[:, -1, :]
            else:
                lo_a[:, :, 1:] = dif
                hi_a[:, :, :-1] = dif
                lo_a[:, :, 0] = hi_a[:, :, 0]
                hi_a[:, :, -1] = lo_a[:, :, -1]
            lo[:, :, axis] = lo_a.reshape(n, m)
            hi[:, :, axis] = hi_a.reshape(n, m)
        endpoint = (np.abs(grid.offsets) == K).any(axis=1)[None, :].repeat(n, axis=0)

    grad = 0.5 * (lo + hi)
    return FiberEnvelope(
        grid=grid, values=env, grad=grad, grad_lo=lo, grad_hi=hi, endpoint=endpoint
    )


def envelope_fiber_derivative(
    env: FiberEnvelope, x: int, offset_index: int
) -> FiberDerivative:
    """Deterministic fiber derivative of the envelope at one edge.

    The momentum is the midpoint of the one-sided slopes; ``width`` is half
    their gap, so zero width means the envelope is differentiable there.  At
    stencil endpoints the slope is one-sided and the edge is flagged.
    """
    d = env.grid.dim
    lo = env.grad_lo[x, offset_index]
    hi = env.grad_hi[x, offset_index]
    width = float(np.max(hi - lo) / 2.0)
    mom = env.grad[x, offset_index]
    momentum = float(mom[0]) if d == 1 else mom.copy()
    return FiberDerivative(
        momentum=momentum,
        width=width,
        is_endpoint=bool(env.endpoint[x, offset_index]),
    )


def momentum_field(env: FiberEnvelope, mu: DiscreteMeasure) -> dict[int, NodeMomentum]:
    """Envelope fiber derivatives at every supported velocity, per support node.

    When several velocities are supported over one node, all their momenta are
    returned and the spread between them is reported; the per-node selection
    is their mean.
    """
    if not env.grid.same_layout(mu.grid):
        raise ValueError("envelope and measure live on different grids")
    field_out: dict[int, NodeMomentum] = {}
    for node in mu.support_nodes():
        offs = mu.supported_offsets(node)
        ders = tuple((m, envelope_fiber_derivative(env, node, m)) for m in offs)
        moms = np.array([np.atleast_1d(d.momentum) for _m, d in ders])
        spread = 0.0
        for i in range(len(moms)):
            for j in range(i + 1, len(moms)):
                spread = max(spread, float(np.max(np.abs(moms[i] - moms[j]))))
        mean = moms.mean(axis=0)
        momentum = float(mean[0]) if env.grid.dim == 1 else mean
        field_out[node] = NodeMomentum(
            node=node,
            derivatives=ders,
            spread=spread,
            momentum=momentum,
            any_endpoint=any(d.is_endpoint for _m, d in ders),
        )
    return field_out


def momentum_at(env: FiberEnvelope, mu: DiscreteMeasure, node: int) -> NodeMomentum:
    """Momentum at one node; UNDEFINED_NODE error off the projected support."""
    info = momentum_field(env, mu).get(node)
    if info is None:
        raise ValueError(
            f"UNDEFINED_NODE: node {node} is not in the projected support"
        )
    return info
