import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simreach.discrepancy import DiscrepancyFn
from simreach.trace_model import (DimensionError, Hit, HyperRect, ReachTube, Trace, UnsafeSet,
                                  bloat_trace, box_hits_unsafe, distance, grid_cover, refine_cell)

finite = st.floats(-100, 100, allow_nan=False)


@st.composite
def boxes(draw, max_dim=3):
    dim = draw(st.integers(1, max_dim))
    lo = np.array(draw(st.lists(finite, min_size=dim, max_size=dim)))
    w = np.array(draw(st.lists(st.floats(0, 10), min_size=dim, max_size=dim)))
    return HyperRect(lo, lo + w)


class TestDistance:
    def test_identity(self):
        assert distance([1, 2], [1, 2], "Linf") == 0

    def test_l2_triangle(self):
        assert distance([0, 0], [3, 4], "L2") == 5

    def test_linf_max_component(self):
        assert distance([0, 0], [3, 4], "Linf") == 4

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            distance([0, 0], [1, 2, 3])

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            distance([np.nan], [0.0])

    @given(st.lists(finite, min_size=1, max_size=5), st.data())
    def test_symmetric_and_zero_iff_equal(self, a, data):
        b = data.draw(st.lists(finite, min_size=len(a), max_size=len(a)))
        for norm in ("Linf", "L2"):
            assert distance(a, b, norm) == distance(b, a, norm)
            assert (distance(a, b, norm) == 0) == (a == b)


class TestHyperRect:
    def test_rejects_inverted(self):
        with pytest.raises(ValueError):
            HyperRect([1.0], [0.0])

    def test_rejects_mismatched(self):
        with pytest.raises(DimensionError):
            HyperRect([0.0], [1.0, 2.0])

    def test_geometry(self):
        box = HyperRect.from_intervals([(0, 4), (1, 2)])
        np.testing.assert_array_equal(box.center, [2, 1.5])
        assert box.radius == 2 and box.volume == 4
        assert box.contains([4, 1]) and not box.contains([4.1, 1])


class TestGridCover:
    def test_unit_interval_half(self):
        cells = grid_cover(HyperRect([0.0], [1.0]), 0.5)
        assert len(cells) == 1
        center, cell = cells[0]
        assert cell == HyperRect([0.0], [1.0]) and center[0] == 0.5

    def test_unit_interval_quarter(self):
        cells = [c for _, c in grid_cover(HyperRect([0.0], [1.0]), 0.25)]
        assert cells == [HyperRect([0.0], [0.5]), HyperRect([0.5], [1.0])]

    def test_unit_square_quarter(self):
        assert len(grid_cover(HyperRect([0.0, 0.0], [1.0, 1.0]), 0.25)) == 4

    def test_zero_width_dimension_gets_one_cell(self):
        cells = grid_cover(HyperRect([0.0, 5.0], [1.0, 5.0]), 0.1)
        assert len(cells) == 5

    @pytest.mark.parametrize("delta", [0.0, -1.0])
    def test_non_positive_delta(self, delta):
        with pytest.raises(ValueError):
            grid_cover(HyperRect([0.0], [1.0]), delta)

    @given(boxes(), st.floats(0.3, 5.0), st.integers(0, 2**32 - 1))
    def test_partition(self, K, delta, seed):
        cells = [c for _, c in grid_cover(K, delta)]
        for c in cells:
            assert c.radius <= delta + 1e-12
            assert K.contains_box(c)
        if K.volume > 0:
            assert math.isclose(sum(c.volume for c in cells), K.volume, rel_tol=1e-9)
        rng = np.random.default_rng(seed)
        pts = K.lo + K.widths * rng.random((1000, K.dim))
        covered = np.zeros(len(pts), dtype=bool)
        for c in cells:
            covered |= np.all((pts >= c.lo) & (pts <= c.hi), axis=1)
        assert covered.all()


class TestRefineCell:
    def test_bisects_widest(self):
        a, b = refine_cell(HyperRect.from_intervals([(0, 4), (0, 1)]))
        assert a == HyperRect.from_intervals([(0, 2), (0, 1)])
        assert b == HyperRect.from_intervals([(2, 4), (0, 1)])

    def test_one_dimensional(self):
        assert refine_cell(HyperRect([0.0], [1.0])) == (HyperRect([0.0], [0.5]), HyperRect([0.5], [1.0]))

    def test_tie_splits_lowest_index(self):
        a, _ = refine_cell(HyperRect.from_intervals([(0, 1), (0, 1)]))
        assert a == HyperRect.from_intervals([(0, 0.5), (0, 1)])

    def test_point_cannot_refine(self):
        with pytest.raises(ValueError):
            refine_cell(HyperRect.point([1.0, 2.0]))

    @given(boxes())
    def test_children_partition_parent(self, box):
        if not np.any(box.widths > 0):
            return
        a, b = refine_cell(box)
        assert math.isclose(a.volume + b.volume, box.volume, rel_tol=1e-12, abs_tol=1e-300)
        assert box.contains_box(a) and box.contains_box(b)
        assert max(a.widths.max(), b.widths.max()) <= box.widths.max()


class TestBloat:
    trace = Trace(0.5, np.zeros((3, 1)))

    def _tube(self, c, gamma, delta=0.1):
        return bloat_trace(self.trace, DiscrepancyFn(np.array([c]), np.array([gamma]), 1.0), delta)

    def test_no_growth(self):
        tube = self._tube(1.0, 0.0)
        np.testing.assert_allclose(tube.lo, -0.1)
        np.testing.assert_allclose(tube.hi, 0.1)

    def test_doubling_rate(self):
        tube = self._tube(1.0, math.log(2))
        # sample index 2 is t = 1
        assert tube.lo[2, 0] == pytest.approx(-0.2, abs=1e-15)
        assert tube.hi[2, 0] == pytest.approx(0.2, abs=1e-15)

    def test_constant_factor(self):
        tube = self._tube(2.0, 0.0)
        np.testing.assert_allclose(tube.hi, 0.2)
        np.testing.assert_allclose(tube.lo, -0.2)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            bloat_trace(self.trace, DiscrepancyFn(np.ones(2), np.zeros(2), 1.0), 0.1)

    @given(st.floats(1, 5), st.floats(-2, 2), st.floats(0, 1), st.floats(0, 1))
    def test_contains_trace_and_monotone(self, c, gamma, d1, d2):
        rng = np.random.default_rng(0)
        tr = Trace(0.1, rng.normal(size=(11, 2)))
        disc = DiscrepancyFn(np.full(2, c), np.full(2, gamma), 1.0)
        small, big = sorted((d1, d2))
        t_small, t_big = bloat_trace(tr, disc, small), bloat_trace(tr, disc, big)
        assert t_small.contains_states(tr.states).all()
        assert np.all(t_big.hi - t_big.lo >= t_small.hi - t_small.lo)
        bigger_c = DiscrepancyFn(np.full(2, c + 1), np.full(2, gamma), 1.0)
        assert np.all(bloat_trace(tr, bigger_c, small).hi >= t_small.hi)


class TestUnsafe:
    # x >= 2 written as -x <= -2
    U = UnsafeSet.from_constraints([([-1.0], -2.0)])

    def test_disjoint(self):
        assert box_hits_unsafe(HyperRect([0.0], [1.0]), self.U) is Hit.DISJOINT

    def test_overlaps(self):
        assert box_hits_unsafe(HyperRect([1.5], [3.0]), self.U) is Hit.OVERLAPS

    def test_contained(self):
        assert box_hits_unsafe(HyperRect([2.5], [3.0]), self.U) is Hit.CONTAINED

    def test_closed_boundary(self):
        assert self.U.contains([2.0])
        assert box_hits_unsafe(HyperRect([0.0], [2.0]), self.U) is Hit.OVERLAPS

    def test_union_semantics(self):
        U = UnsafeSet.from_constraints([([1.0, 0.0], 0.0), ([0.0, 1.0], 0.0)])
        assert U.contains([5.0, -1.0]) and U.contains([-1.0, 5.0]) and not U.contains([1.0, 1.0])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            self.U.contains([1.0, 2.0])

    def test_needs_a_constraint(self):
        with pytest.raises(ValueError):
            UnsafeSet(np.zeros((0, 1)), np.zeros(0))

    @given(boxes(max_dim=2), st.data())
    def test_agrees_with_point_sampling(self, box, data):
        dim = box.dim
        n = data.draw(st.integers(1, 3))
        A = np.array([data.draw(st.lists(st.floats(-2, 2), min_size=dim, max_size=dim)) for _ in range(n)])
        b = np.array(data.draw(st.lists(st.floats(-50, 50), min_size=n, max_size=n)))
        U = UnsafeSet(A, b)
        rng = np.random.default_rng(1)
        pts = box.lo + box.widths * rng.random((1000, dim))
        unsafe = U.points_unsafe(pts)
        hit = box_hits_unsafe(box, U)
        if hit is Hit.DISJOINT:
            assert not unsafe.any()
        elif hit is Hit.CONTAINED:
            assert unsafe.all()


def test_trace_invariants():
    tr = Trace(0.1, np.arange(6.0).reshape(3, 2))
    np.testing.assert_array_equal(tr.initial, tr.states[0])
    np.testing.assert_allclose(tr.times, [0.0, 0.1, 0.2])
    assert tr.horizon == pytest.approx(0.2)
    with pytest.raises(ValueError):
        Trace(0.0, np.zeros((2, 1)))


def test_tube_rejects_negative_width():
    with pytest.raises(ValueError):
        ReachTube(0.1, np.ones((2, 1)), np.zeros((2, 1)))
