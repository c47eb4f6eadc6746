import numpy as np
import pytest

from deepsafe.network import IDENTITY, Layer, Network
from deepsafe.oracle import GridSpec, default_step, grid_search
from deepsafe.synthetic import random_relu_network
from deepsafe.verifier import Query, SliceConstraint, check_witness


def constant_net(bias, input_dim=2, bound=10.0):
    k = len(bias)
    return Network(
        input_dim,
        [Layer(np.zeros((k, input_dim)), np.array(bias, float), IDENTITY)],
        np.array([[-bound, bound]] * input_dim),
    )


def lattice_first_point(cen, r, step):
    """Independent recomputation of the first in-ball lattice point."""
    axes = []
    for c in cen:
        k_lo = int(np.ceil((c - r) / step - 1e-9))
        k_hi = int(np.floor((c + r) / step + 1e-9))
        axes.append([k * step for k in range(k_lo, k_hi + 1)])
    best = None
    for x0 in axes[0]:
        for x1 in axes[1]:
            if abs(x0 - cen[0]) + abs(x1 - cen[1]) <= r + 1e-12:
                return np.array([x0, x1])
    return None


class TestGridSearch:
    def test_constant_unsafe_finds_lexicographic_first(self):
        net = constant_net([0.0, 1.0])
        cen = np.array([0.31, -0.17])
        r, step = 0.4, 0.1
        q = Query(net, cen, r, 0, 1)
        res = grid_search(net, q, GridSpec(step=step))
        assert res.found
        expected = lattice_first_point(cen, r, step)
        assert res.witness == pytest.approx(expected, abs=0)

    def test_zero_grid_points_note(self):
        net = constant_net([0.0, 1.0])
        q = Query(net, np.array([0.5, 0.5]), 0.3, 0, 1)
        res = grid_search(net, q, GridSpec(step=1.0))
        assert not res.found
        assert "0 points examined" in res.note

    def test_point_guard_refuses(self):
        net = constant_net([0.0, 1.0])
        q = Query(net, np.zeros(2), 1.0, 0, 1)
        with pytest.raises(ValueError, match="cap"):
            grid_search(net, q, GridSpec(step=1e-6, max_points=1000))

    def test_guard_checked_before_enumeration(self):
        net = constant_net([0.0, 1.0])
        q = Query(net, np.zeros(2), 1.0, 0, 1)
        res = grid_search(net, q, GridSpec(step=0.5, max_points=1000))
        assert res.found  # 5x5 lattice fits under the cap

    def test_refinement_monotonicity(self):
        rng = np.random.default_rng(17)
        flips = 0
        for i in range(25):
            net = random_relu_network(seed=6000 + i, hidden=4)
            cen = rng.uniform(-0.5, 0.5, size=2)
            r = float(rng.uniform(0.1, 0.8))
            q = Query(net, cen, r, 0, int(rng.integers(1, 3)))
            coarse = grid_search(net, q, GridSpec(step=r / 10))
            fine = grid_search(net, q, GridSpec(step=r / 20))
            if coarse.found:
                assert fine.found  # halving the step keeps every old point
            if fine.found and not coarse.found:
                flips += 1
        # the converse direction must be possible in principle; not asserted

    def test_respects_input_bounds(self):
        net = constant_net([0.0, 1.0], bound=0.05)
        q = Query(net, np.zeros(2), 0.04, 0, 1)
        res = grid_search(net, q, GridSpec(step=0.01))
        assert res.found
        assert np.all(np.abs(res.witness) <= 0.05)

    def test_slice_pins_dimensions(self, tiny_net):
        slc = SliceConstraint(((1, -0.3),), 0.4)
        q = Query(tiny_net, np.array([0.0, -0.3]), 0.4, 2, 0, slice=slc)
        res = grid_search(tiny_net, q, GridSpec(step=0.01))
        if res.found:
            assert res.witness[1] == -0.3
            assert check_witness(tiny_net, q, res.witness)

    def test_found_witness_validates(self, tiny_net, tiny_queries):
        for item in tiny_queries:
            q = Query(tiny_net, np.array(item["cen"]), item["r"], item["label"],
                      item["target"])
            res = grid_search(tiny_net, q, GridSpec(step=default_step(item["r"])))
            if res.found:
                assert check_witness(tiny_net, q, res.witness)

    def test_examined_count_reported(self):
        net = constant_net([1.0, 0.0])  # never unsafe
        q = Query(net, np.zeros(2), 0.2, 0, 1)
        res = grid_search(net, q, GridSpec(step=0.1))
        assert not res.found
        assert res.points_examined > 0
        assert ("%d points examined" % res.points_examined) == res.note

    def test_bad_step_rejected(self):
        net = constant_net([0.0, 1.0])
        q = Query(net, np.zeros(2), 0.2, 0, 1)
        with pytest.raises(ValueError, match="positive"):
            grid_search(net, q, GridSpec(step=0.0))

    def test_default_step(self):
        assert default_step(1.0) == pytest.approx(0.02)
