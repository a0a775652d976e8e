import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gffperc.errors import GeometryError, ScaleError
from gffperc.geometry import (
    Box,
    BoxFamily,
    VertexSet,
    boundary_ops,
    boxes_hit,
    box_family_boundary,
    columns,
    lattice_boxes_within,
    maximal_well_separated,
)
from oracles import neighbor_scan_boundaries, quotient_boxes


class TestBox:
    def test_kind_sides(self):
        b = Box(2, (0, 0, 0))
        assert b.side == 2
        assert b.with_kind("U").side == 6
        assert b.with_kind("D").side == 14
        assert b.with_kind("K").side == 402

    def test_kind_offsets(self):
        b = Box(3, (3, -3))
        lo, hi = b.with_kind("K").bounds()
        assert tuple(lo) == (3 - 300, -3 - 300)
        assert tuple(hi) == (3 + 303, -3 + 303)

    def test_misaligned_anchor_rejected(self):
        with pytest.raises(GeometryError):
            Box(4, (2, 0))

    def test_enlarged_matches_kind_k(self):
        b = Box(2, (4, -2, 0))
        lo, hi = b.enlarged(100)
        klo, khi = b.with_kind("K").bounds()
        assert np.array_equal(lo, klo) and np.array_equal(hi, khi)


class TestBoundaryOps:
    def test_singleton_d3(self):
        S = VertexSet([[0, 0, 0]])
        inner, outer, clo = boundary_ops(S)
        assert len(inner) == 1
        assert len(outer) == 6
        assert len(clo) == 7

    def test_empty(self):
        S = VertexSet.empty(3)
        inner, outer, clo = boundary_ops(S)
        assert len(inner) == len(outer) == len(clo) == 0

    def test_b2_cube_outer_24(self):
        # 2x2x2 cube: exhaustive neighbor scan gives |outer| = 24
        pts = [(x, y, z) for x in range(2) for y in range(2) for z in range(2)]
        S = VertexSet(pts)
        inner, outer, clo = boundary_ops(S)
        o_inner, o_outer, o_clo = neighbor_scan_boundaries(set(pts), 3)
        assert outer.tuples() == o_outer
        assert inner.tuples() == o_inner
        assert clo.tuples() == o_clo
        assert len(outer) == 24

    def test_edge_touch_errors(self):
        S = VertexSet([[0, 0]], bounds=((0, 0), (4, 4)))
        with pytest.raises(GeometryError):
            boundary_ops(S)

    @settings(max_examples=50, deadline=None)
    @given(
        st.sets(
            st.tuples(st.integers(-6, 6), st.integers(-6, 6), st.integers(-6, 6)),
            min_size=1,
            max_size=24,
        )
    )
    def test_invariants_random(self, pts):
        S = VertexSet(sorted(pts))
        inner, outer, clo = boundary_ops(S)
        assert S.tuples() <= clo.tuples()
        assert inner.tuples() <= S.tuples()
        assert not (outer.tuples() & S.tuples())
        assert len(outer) <= 6 * max(len(inner), 1)
        ref = neighbor_scan_boundaries(S.tuples(), 3)
        assert (inner.tuples(), outer.tuples(), clo.tuples()) == ref


class TestBoxesHit:
    def test_origin_single_box(self):
        fam = boxes_hit(VertexSet([[0, 0, 0]]), 4)
        assert len(fam) == 1
        assert fam.boxes[0].anchor == (0, 0, 0)

    def test_segment_three_boxes(self):
        pts = [(i, 0, 0) for i in range(9)]
        fam = boxes_hit(VertexSet(pts), 4)
        assert len(fam) == 3

    def test_random_matches_quotient_oracle(self):
        rng = np.random.default_rng(5)
        pts = rng.integers(0, 32, size=(300, 3))
        S = VertexSet(pts)
        fam = boxes_hit(S, 8)
        assert {b.anchor for b in fam} == quotient_boxes(S.coords, 8)

    def test_coarsening_containment(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            pts = rng.integers(-16, 16, size=(40, 3))
            S = VertexSet(pts)
            fine = {b.anchor for b in boxes_hit(S, 2)}
            coarse = {b.anchor for b in boxes_hit(S, 8)}
            coarsened = {tuple((np.asarray(a) // 8) * 8) for a in fine}
            assert coarsened == coarse  # hit sets coarsen consistently (2 | 8)

    def test_boundary_in_coarse_lattice(self):
        # solid 3x3x3 block of boxes: boundary excludes only the center
        pts = [(x, y, z) for x in range(12) for y in range(12) for z in range(12)]
        fam = boxes_hit(VertexSet(pts), 4)
        bdry = box_family_boundary(fam)
        assert len(fam) == 27
        assert len(bdry) == 26


class TestWellSeparated:
    def test_two_disjoint_kept(self):
        b1 = Box(1, (0, 0, 0))
        b2 = Box(1, (300, 0, 0))
        fam = BoxFamily([b1, b2])
        out = maximal_well_separated(fam)
        assert len(out) == 2

    def test_triplicate_keeps_one(self):
        b = Box(1, (0, 0, 0))
        out = maximal_well_separated(BoxFamily([b, b, b]))
        assert len(out) == 1

    def test_random_maximal_and_bound(self):
        rng = np.random.default_rng(11)
        anchors = {tuple(a) for a in (rng.integers(0, 300, size=(100, 3)) * 2)}
        boxes = [Box(2, a) for a in anchors]
        fam = BoxFamily(boxes)
        out = maximal_well_separated(fam)
        assert out.check_well_separated(100)
        # maximality: every excluded box conflicts with something kept
        kept = {b.anchor for b in out}
        for b in boxes:
            if b.anchor in kept:
                continue
            trial = BoxFamily(out.boxes + [b])
            assert not trial.check_well_separated(100)
        # single-scale cardinality floor
        assert len(out) >= len(fam) / 201**3

    def test_mixed_scales_largest_first(self):
        big = Box(4, (0, 0, 0))
        small = Box(1, (600, 0, 0))
        out = maximal_well_separated(BoxFamily([small, big]))
        assert out.boxes[0].L == 4

    def test_deterministic_order(self):
        rng = np.random.default_rng(3)
        anchors = [tuple(a) for a in rng.integers(0, 100, size=(40, 3))]
        fam1 = BoxFamily([Box(1, a) for a in anchors])
        fam2 = BoxFamily([Box(1, a) for a in reversed(anchors)])
        out1 = maximal_well_separated(fam1)
        out2 = maximal_well_separated(fam2)
        assert [b.anchor for b in out1.boxes] == [b.anchor for b in out2.boxes]


class TestColumns:
    def test_counts_d3(self):
        region = Box(8, (0, 0, 0))
        cols = columns(region, 2, 0)
        assert len(cols) == 16
        assert all(len(c) == 4 for c in cols)

    def test_axis_symmetry(self):
        region = Box(8, (0, 0, 0))
        assert len(columns(region, 2, 1)) == 16

    def test_non_divisible_errors(self):
        with pytest.raises(ScaleError):
            columns(Box(9, (0, 0, 0)), 2, 0)

    def test_grouping_oracle(self):
        region = Box(6, (6, 0, 6))
        cols = columns(region, 3, 2)
        seen = {}
        for b in lattice_boxes_within(*region.bounds(), 3):
            key = (b.anchor[0], b.anchor[1])
            seen.setdefault(key, set()).add(b.anchor)
        got = {tuple(sorted({bb.anchor for bb in c})) for c in cols}
        want = {tuple(sorted(v)) for v in seen.values()}
        assert got == want


class TestVertexSetCsv:
    def test_roundtrip(self, tmp_path):
        S = VertexSet([[3, -1, 2], [0, 0, 0], [3, -1, 2]])
        p = tmp_path / "s.csv"
        S.to_csv(p)
        back = VertexSet.from_csv(p)
        assert back == S
