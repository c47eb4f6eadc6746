"""Brute-force grid search used as independent ground truth in tests.

Enumerates the lattice of integer multiples of a step inside the query
box (so refining the step only ever adds points), keeps the points whose
free-dimension L1 distance to the centroid is within the radius, and
returns the first one, in lexicographic order, where the target label
scores at least the query label. Deliberately shares no code with the
branch-and-bound verifier beyond the Query definition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Network, evaluate_batch
from .verifier import Query

_BLOCK = 200_000  # rows per evaluation chunk, keeps memory flat


@dataclass
class GridSpec:
    """Step per free dimension (scalar broadcasts) and an enumeration cap."""

    step: float
    max_points: int = 10_000_000


@dataclass
class OracleResult:
    found: bool
    witness: np.ndarray | None
    points_examined: int
    note: str


def default_step(r: float) -> float:
    """Step used by the test suite for low-dimensional queries."""
    return r / 50.0


def grid_search(net: Network, q: Query, grid: GridSpec) -> OracleResult:
    """Exhaustive search of the query domain at the grid resolution.

    Raises ValueError without enumerating anything if the lattice would
    exceed ``grid.max_points``.
    """
    n = net.input_dim
    fixed = dict(q.slice.fixed_dims) if q.slice is not None else {}
    fixed = {int(d): float(v) for d, v in fixed.items()}
    free_dims = [i for i in range(n) if i not in fixed]

    cen = np.asarray(q.cen, dtype=float)
    lo = np.empty(n)
    hi = np.empty(n)
    for i in range(n):
        if i in fixed:
            lo[i] = hi[i] = fixed[i]
        else:
            lo[i] = cen[i] - q.r
            hi[i] = cen[i] + q.r
    lo = np.maximum(lo, net.input_bounds[:, 0])
    hi = np.minimum(hi, net.input_bounds[:, 1])
    if np.any(lo > hi):
        return OracleResult(False, None, 0, "0 points examined (empty domain)")

    steps = np.broadcast_to(np.asarray(grid.step, dtype=float), (len(free_dims),))
    if np.any(steps <= 0):
        raise ValueError("grid step must be positive")

    k_lo = np.ceil(lo[free_dims] / steps - 1e-9).astype(np.int64)
    k_hi = np.floor(hi[free_dims] / steps + 1e-9).astype(np.int64)
    counts = np.maximum(k_hi - k_lo + 1, 0)
    if np.any(counts == 0):
        return OracleResult(False, None, 0, "0 points examined (grid misses box)")
    total = int(np.prod(counts, dtype=np.float64))
    if float(np.prod(counts, dtype=np.float64)) > grid.max_points:
        raise ValueError(
            "grid would enumerate %.3g points, above the %d-point cap"
            % (float(np.prod(counts, dtype=np.float64)), grid.max_points)
        )

    # lexicographic order: first free dimension varies slowest
    strides = np.ones(len(free_dims), dtype=np.int64)
    for i in range(len(free_dims) - 2, -1, -1):
        strides[i] = strides[i + 1] * counts[i + 1]

    examined = 0
    for start in range(0, total, _BLOCK):
        idx = np.arange(start, min(start + _BLOCK, total), dtype=np.int64)
        ks = (idx[:, None] // strides[None, :]) % counts[None, :] + k_lo[None, :]
        X = np.empty((idx.size, n))
        for d, v in fixed.items():
            X[:, d] = v
        X[:, free_dims] = ks * steps
        in_ball = np.abs(X[:, free_dims] - cen[free_dims]).sum(axis=1) <= q.r + 1e-12
        if not in_ball.any():
            continue
        Xb = X[in_ball]
        examined += Xb.shape[0]
        scores = evaluate_batch(net, Xb)
        hits = np.flatnonzero(scores[:, q.target] >= scores[:, q.label])
        if hits.size:
            witness = Xb[hits[0]].copy()
            return OracleResult(
                True, witness, examined, "%d points examined" % examined
            )
    return OracleResult(False, None, examined, "%d points examined" % examined)
