"""Complete targeted-robustness decision procedure for ReLU networks.

A query asks whether some input x in an L1 ball around a region centroid
(optionally restricted to a plane with several coordinates pinned) gets
the target label scored at least as high as the region label:

    exists x:  |x - cen|_1 <= r  and  score(x, target) >= score(x, label)

The search is a branch-and-bound over ReLU phases. Interval propagation
over the root box fixes every ReLU whose pre-activation interval does
not straddle zero; the remaining unstable ReLUs are case-split (active:
pre >= 0 and output = pre; inactive: pre <= 0 and output = 0), widest
interval first. Once every ReLU is fixed the network is affine in x and
the query becomes a linear feasibility problem; the L1 ball is encoded
exactly with one slack variable per free dimension (t_i >= x_i - cen_i,
t_i >= cen_i - x_i, sum t_i <= r). A feasible leaf yields a concrete
witness that is re-validated by direct forward evaluation before being
reported; Safe is returned only when every branch is proven infeasible.

Branches where the interval upper bound of score(target) - score(label)
is already negative are pruned without solving.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog

from . import exactlp
from .errors import VerifierError
from .network import RELU, Network, evaluate

SAFE = "safe"
UNSAFE = "unsafe"
RESOURCE_LIMIT = "resource_limit"

# Feasibility tolerance for witness re-validation. The non-strict score
# inequality is taken at face value: boundary-equal scores are Unsafe.
EPS_FEAS = 1e-6

# Margin on interval-based pruning so float rounding in the propagated
# bounds can never discard a branch that is feasible by a hair.
EPS_PRUNE = 1e-9

DEFAULT_MAX_SPLITS = 10**6
DEFAULT_TIMEOUT_SECS = 12 * 3600.0  # matches the per-region budget used at scale


@dataclass(frozen=True)
class SliceConstraint:
    """Pin the listed dimensions and verify a reduced-radius ball.

    ``adjusted_radius`` must equal the radius of the Query carrying this
    slice; it is kept here so serialized slices are self-describing.
    """

    fixed_dims: tuple
    adjusted_radius: float

    def dims(self) -> list[int]:
        return [int(d) for d, _ in self.fixed_dims]


@dataclass
class Query:
    """One targeted check: (region ball, cluster label, target label)."""

    net: Network
    cen: np.ndarray
    r: float
    label: int
    target: int
    slice: SliceConstraint | None = None
    max_splits: int = DEFAULT_MAX_SPLITS
    timeout_secs: float = DEFAULT_TIMEOUT_SECS
    exact_recheck: bool = False

    def __post_init__(self):
        self.cen = np.asarray(self.cen, dtype=float)


@dataclass
class Verdict:
    outcome: str  # SAFE | UNSAFE | RESOURCE_LIMIT
    witness: np.ndarray | None = None
    note: str | None = None
    splits: int = 0
    leaves: int = 0
    root_unstable: int = 0
    wall_ms: float = 0.0


def slice_radius(r: float, cen, fixed) -> float | None:
    """Radius of the ball's cross-section on the plane fixing ``fixed``.

    ``fixed`` is a list of (dimension, value) pairs. With d the L2
    distance between the centroid and the plane over those dimensions,
    the remaining radius is sqrt(r^2 - d^2); None means the plane misses
    the ball interior (d >= r).
    """
    if not r > 0:
        raise ValueError("radius must be positive")
    dims = [d for d, _ in fixed]
    if len(dims) != len(set(dims)):
        raise ValueError("duplicate slice dimensions: %s" % (dims,))
    cen = np.asarray(cen, dtype=float)
    dist = math.sqrt(sum((float(v) - cen[int(d)]) ** 2 for d, v in fixed))
    if dist >= r:
        return None
    if dist == 0.0:
        return float(r)  # plane through the centroid keeps the full radius
    return math.sqrt(r * r - dist * dist)


def _zero_phases(net: Network):
    return [
        np.zeros(layer.out_dim, dtype=np.int8) if layer.activation == RELU else None
        for layer in net.layers
    ]


def _propagate(net: Network, lo, hi, phases):
    """Interval pass with phase constraints applied.

    Returns (feasible, pre_bounds, effective, out_bounds): pre_bounds is
    a list of (lo, hi) pre-activation arrays per layer; effective marks
    each ReLU +1 (active), -1 (inactive) or 0 (unstable), merging split
    decisions with interval-stable neurons. feasible is False when a
    phase decision contradicts the propagated interval.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    pre_bounds = []
    effective = []
    for li, layer in enumerate(net.layers):
        w_pos = np.clip(layer.weights, 0.0, None)
        w_neg = np.clip(layer.weights, None, 0.0)
        plo = w_pos @ lo + w_neg @ hi + layer.bias
        phi = w_pos @ hi + w_neg @ lo + layer.bias
        pre_bounds.append((plo, phi))
        if layer.activation == RELU:
            ph = phases[li] if phases is not None else None
            if ph is None:
                ph = np.zeros(layer.out_dim, dtype=np.int8)
            if np.any((ph == 1) & (phi < -EPS_PRUNE)) or np.any(
                (ph == -1) & (plo > EPS_PRUNE)
            ):
                return False, pre_bounds, effective, None
            eff = np.where(ph != 0, ph, np.where(plo >= 0.0, 1, np.where(phi <= 0.0, -1, 0)))
            eff = eff.astype(np.int8)
            effective.append(eff)
            inactive = eff == -1
            lo = np.where(inactive, 0.0, np.maximum(plo, 0.0))
            hi = np.where(inactive, 0.0, np.maximum(phi, 0.0))
        else:
            effective.append(None)
            lo, hi = plo, phi
    return True, pre_bounds, effective, (lo, hi)


def tighten_bounds(net: Network, box):
    """Sound per-neuron pre-activation intervals over an input box.

    ``box`` is an (input_dim, 2) array of [lower, upper] pairs. Returns
    (pre_bounds, stable): pre_bounds as in :func:`_propagate`; stable has
    one int8 array per layer (+1 stable-active, -1 stable-inactive,
    0 unstable) and None for identity layers.
    """
    box = np.asarray(box, dtype=float)
    if box.ndim != 2 or box.shape != (net.input_dim, 2):
        raise ValueError("box must have shape (%d, 2)" % net.input_dim)
    if np.any(box[:, 0] > box[:, 1]):
        raise ValueError("box is empty")
    _, pre_bounds, effective, _ = _propagate(net, box[:, 0], box[:, 1], None)
    return pre_bounds, effective


def _compose_affine(net: Network, eff):
    """Collapse the network to scores = M @ x + c under fixed phases.

    Also emits the phase consistency rows (a, b) meaning a @ x <= b.
    """
    M = np.eye(net.input_dim)
    c = np.zeros(net.input_dim)
    rows = []
    for li, layer in enumerate(net.layers):
        Mp = layer.weights @ M
        cp = layer.weights @ c + layer.bias
        if layer.activation == RELU:
            e = eff[li]
            for j in range(layer.out_dim):
                if e[j] == 1:  # pre >= 0
                    rows.append((-Mp[j], float(cp[j])))
                else:  # pre <= 0
                    rows.append((Mp[j].copy(), float(-cp[j])))
            act = (e == 1).astype(float)
            M = Mp * act[:, None]
            c = cp * act
        else:
            M, c = Mp, cp
    return M, c, rows


def _leaf_constraints(net, q, lo, hi, eff, free_idx):
    """Inequality system A v <= b over v = (x, t_free) for one leaf."""
    M, c, phase_rows = _compose_affine(net, eff)
    n = net.input_dim
    nf = free_idx.size
    n_var = n + nf
    A, b = [], []
    for a_row, rhs in phase_rows:
        A.append(np.concatenate([a_row, np.zeros(nf)]))
        b.append(rhs)
    # score(target) >= score(label)
    A.append(np.concatenate([M[q.label] - M[q.target], np.zeros(nf)]))
    b.append(float(c[q.target] - c[q.label]))
    # t_i >= |x_i - cen_i| on free dims, total perturbation <= r
    for k, i in enumerate(free_idx):
        row = np.zeros(n_var)
        row[i], row[n + k] = 1.0, -1.0
        A.append(row)
        b.append(float(q.cen[i]))
        row = np.zeros(n_var)
        row[i], row[n + k] = -1.0, -1.0
        A.append(row)
        b.append(float(-q.cen[i]))
    row = np.zeros(n_var)
    row[n:] = 1.0
    A.append(row)
    b.append(float(q.r))
    bounds = [(float(lo[i]), float(hi[i])) for i in range(n)]
    bounds += [(0.0, float(q.r))] * nf
    return np.array(A), np.array(b), bounds


def _solve_leaf(net, q, lo, hi, eff, free_idx):
    A, b, bounds = _leaf_constraints(net, q, lo, hi, eff, free_idx)
    n = net.input_dim
    cost = np.zeros(A.shape[1])
    cost[n:] = 1.0  # prefer the least-perturbed feasible point
    res = linprog(cost, A_ub=A, b_ub=b, bounds=bounds, method="highs")
    if res.status == 0:
        return True, res.x[:n]
    if res.status == 2:
        return False, None
    raise VerifierError(
        "leaf LP returned status %d: %s" % (res.status, getattr(res, "message", ""))
    )


def _compose_affine_exact(net: Network, eff):
    n = net.input_dim
    M = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    c = [Fraction(0)] * n
    rows = []
    for li, layer in enumerate(net.layers):
        W = [[Fraction(float(w)) for w in row] for row in layer.weights]
        bias = [Fraction(float(v)) for v in layer.bias]
        out_dim = len(W)
        in_dim = len(M)
        Mp = [
            [sum(W[i][k] * M[k][j] for k in range(in_dim)) for j in range(n)]
            for i in range(out_dim)
        ]
        cp = [
            sum(W[i][k] * c[k] for k in range(in_dim)) + bias[i]
            for i in range(out_dim)
        ]
        if layer.activation == RELU:
            e = eff[li]
            for j in range(out_dim):
                if e[j] == 1:
                    rows.append(([-v for v in Mp[j]], cp[j]))
                else:
                    rows.append((list(Mp[j]), -cp[j]))
            M = [
                [Mp[i][j] if e[i] == 1 else Fraction(0) for j in range(n)]
                for i in range(out_dim)
            ]
            c = [cp[i] if e[i] == 1 else Fraction(0) for i in range(out_dim)]
        else:
            M, c = Mp, cp
    return M, c, rows


def _solve_leaf_exact(net, q, lo, hi, eff, free_idx):
    """Rational re-check of a disputed leaf; exact w.r.t. the float weights."""
    M, c, phase_rows = _compose_affine_exact(net, eff)
    n = net.input_dim
    nf = free_idx.size
    n_var = n + nf
    A, b = [], []

    def row_of(pairs):
        row = [Fraction(0)] * n_var
        for col, val in pairs:
            row[col] = val
        return row

    for a_row, rhs in phase_rows:
        A.append(a_row + [Fraction(0)] * nf)
        b.append(rhs)
    A.append([M[q.label][j] - M[q.target][j] for j in range(n)] + [Fraction(0)] * nf)
    b.append(c[q.target] - c[q.label])
    r_frac = Fraction(float(q.r))
    for k, i in enumerate(free_idx):
        cen_i = Fraction(float(q.cen[i]))
        A.append(row_of([(int(i), Fraction(1)), (n + k, Fraction(-1))]))
        b.append(cen_i)
        A.append(row_of([(int(i), Fraction(-1)), (n + k, Fraction(-1))]))
        b.append(-cen_i)
        A.append(row_of([(n + k, Fraction(-1))]))
        b.append(Fraction(0))
        A.append(row_of([(n + k, Fraction(1))]))
        b.append(r_frac)
    A.append(row_of([(n + k, Fraction(1)) for k in range(nf)]))
    b.append(r_frac)
    for i in range(n):
        A.append(row_of([(i, Fraction(1))]))
        b.append(Fraction(float(hi[i])))
        A.append(row_of([(i, Fraction(-1))]))
        b.append(-Fraction(float(lo[i])))
    feasible, x = exactlp.solve_feasibility(A, b)
    if not feasible:
        return False, None
    return True, np.array([float(v) for v in x[:n]])


def _validate_query(q: Query):
    net = q.net
    if not (np.isfinite(q.r) and q.r > 0):
        raise ValueError("query radius must be positive and finite")
    if q.label == q.target:
        raise ValueError("target label must differ from the region label")
    for l in (q.label, q.target):
        if not 0 <= l < net.label_count:
            raise ValueError("label %d out of range" % l)
    if q.cen.shape != (net.input_dim,):
        raise ValueError(
            "centroid has shape %s, expected (%d,)" % (q.cen.shape, net.input_dim)
        )
    if not np.all(np.isfinite(q.cen)):
        raise ValueError("centroid contains non-finite values")
    if np.any(q.cen < net.input_bounds[:, 0]) or np.any(q.cen > net.input_bounds[:, 1]):
        raise ValueError("centroid lies outside the network input bounds")
    if q.slice is not None:
        dims = q.slice.dims()
        if len(dims) != len(set(dims)):
            raise ValueError("duplicate slice dimensions")
        if any(not 0 <= d < net.input_dim for d in dims):
            raise ValueError("slice dimension out of range")
        if not math.isclose(q.slice.adjusted_radius, q.r, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError("slice adjusted_radius must equal the query radius")


def _free_mask(q: Query):
    fixed = dict(q.slice.fixed_dims) if q.slice is not None else {}
    mask = np.ones(q.net.input_dim, dtype=bool)
    for d in fixed:
        mask[int(d)] = False
    return mask, {int(d): float(v) for d, v in fixed.items()}


def check_witness(net: Network, q: Query, x) -> bool:
    """True iff x certifies the query Unsafe under direct evaluation.

    Conditions, each with EPS_FEAS slack where numerical: inside the
    input bounds, slice dimensions pinned exactly, L1 distance to the
    centroid over free dimensions at most r, and the target score at
    least the label score.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (net.input_dim,) or not np.all(np.isfinite(x)):
        return False
    if np.any(x < net.input_bounds[:, 0] - EPS_FEAS):
        return False
    if np.any(x > net.input_bounds[:, 1] + EPS_FEAS):
        return False
    free, fixed = _free_mask(q)
    for d, v in fixed.items():
        if x[d] != v:
            return False
    if np.abs(x[free] - q.cen[free]).sum() > q.r + EPS_FEAS:
        return False
    scores = evaluate(net, x)
    return bool(scores[q.target] >= scores[q.label] - EPS_FEAS)


def _root_box(q: Query):
    free, fixed = _free_mask(q)
    net = q.net
    eff_cen = q.cen.copy()
    for d, v in fixed.items():
        eff_cen[d] = v
    lo = np.where(free, q.cen - q.r, eff_cen)
    hi = np.where(free, q.cen + q.r, eff_cen)
    lo = np.maximum(lo, net.input_bounds[:, 0])
    hi = np.minimum(hi, net.input_bounds[:, 1])
    return lo, hi, free, eff_cen


def decide(q: Query) -> Verdict:
    """Decide the query: Safe, Unsafe with a validated witness, or
    ResourceLimit when the split or time budget runs out.

    Safe means every branch of the complete ReLU case split was proven
    infeasible; a resource limit is never reported as Safe. Unsafe
    witnesses always pass :func:`check_witness`; a leaf solution that
    fails re-validation raises VerifierError unless ``exact_recheck``
    settles the leaf in rational arithmetic.
    """
    t_start = time.perf_counter()
    _validate_query(q)
    net = q.net

    def wall_ms():
        return (time.perf_counter() - t_start) * 1000.0

    lo, hi, free, eff_cen = _root_box(q)
    if np.any(lo > hi):
        return Verdict(SAFE, note="empty domain", wall_ms=wall_ms())
    free_idx = np.flatnonzero(free)

    feas_root, _, eff_root, _ = _propagate(net, lo, hi, _zero_phases(net))
    root_unstable = int(
        sum(int((e == 0).sum()) for e in eff_root if e is not None)
    ) if feas_root else 0

    # The effective centroid itself certifies Unsafe whenever the scores
    # already favor the target there.
    if np.all(lo <= eff_cen) and np.all(eff_cen <= hi):
        scores = evaluate(net, eff_cen)
        if scores[q.target] >= scores[q.label]:
            witness = eff_cen.copy()
            if not check_witness(net, q, witness):
                raise VerifierError("centroid witness failed re-validation")
            return Verdict(
                UNSAFE, witness=witness, root_unstable=root_unstable,
                wall_ms=wall_ms(),
            )

    deadline = t_start + q.timeout_secs
    splits = 0
    leaves = 0
    stack = [_zero_phases(net)]
    while stack:
        if time.perf_counter() > deadline:
            return Verdict(
                RESOURCE_LIMIT,
                note="timeout after %d splits, %d leaves" % (splits, leaves),
                splits=splits, leaves=leaves, root_unstable=root_unstable,
                wall_ms=wall_ms(),
            )
        phases = stack.pop()
        feasible, pre_bounds, eff, out = _propagate(net, lo, hi, phases)
        if not feasible:
            leaves += 1
            continue
        out_lo, out_hi = out
        if out_hi[q.target] - out_lo[q.label] < -EPS_PRUNE:
            leaves += 1  # no point in this branch can favor the target
            continue
        pick = None
        pick_width = -math.inf
        for li, e in enumerate(eff):
            if e is None:
                continue
            unstable = np.flatnonzero(e == 0)
            if unstable.size:
                widths = pre_bounds[li][1][unstable] - pre_bounds[li][0][unstable]
                j = int(unstable[int(np.argmax(widths))])
                if widths.max() > pick_width:
                    pick, pick_width = (li, j), float(widths.max())
        if pick is None:
            leaves += 1
            found, x = _solve_leaf(net, q, lo, hi, eff, free_idx)
            if found:
                for d in np.flatnonzero(~free):
                    x[d] = eff_cen[d]
                if check_witness(net, q, x):
                    return Verdict(
                        UNSAFE, witness=x, splits=splits, leaves=leaves,
                        root_unstable=root_unstable, wall_ms=wall_ms(),
                    )
                if q.exact_recheck:
                    found_exact, xe = _solve_leaf_exact(net, q, lo, hi, eff, free_idx)
                    if found_exact:
                        for d in np.flatnonzero(~free):
                            xe[d] = eff_cen[d]
                        if not check_witness(net, q, xe):
                            raise VerifierError(
                                "exact leaf witness failed re-validation"
                            )
                        return Verdict(
                            UNSAFE, witness=xe, splits=splits, leaves=leaves,
                            root_unstable=root_unstable, wall_ms=wall_ms(),
                        )
                    continue  # exact arithmetic refutes the float solution
                raise VerifierError(
                    "leaf witness failed re-validation; rerun with exact_recheck"
                )
            continue
        if splits >= q.max_splits:
            return Verdict(
                RESOURCE_LIMIT,
                note="split budget %d exhausted, %d leaves" % (q.max_splits, leaves),
                splits=splits, leaves=leaves, root_unstable=root_unstable,
                wall_ms=wall_ms(),
            )
        splits += 1
        li, j = pick
        for phase in (-1, 1):
            child = [p.copy() if p is not None else None for p in phases]
            child[li][j] = phase
            stack.append(child)
    return Verdict(
        SAFE, splits=splits, leaves=leaves, root_unstable=root_unstable,
        wall_ms=wall_ms(),
    )
