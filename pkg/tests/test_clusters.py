import numpy as np
import pytest

from gffperc import kernels
from gffperc.clusters import ClusterSet, cluster_union_of, clusters, clusters_from_mask
from gffperc.geometry import Box, VertexSet
from oracles import bfs_components


def _partition(labels):
    out = {}
    for idx, lab in np.ndenumerate(labels):
        if lab:
            out.setdefault(int(lab), set()).add(idx)
    return frozenset(frozenset(v) for v in out.values())


class TestLabeling:
    def test_diagonal_not_adjacent(self):
        dom = Box(4, (0, 0, 0))
        cs = clusters(VertexSet([[0, 0, 0], [1, 1, 1]]), dom)
        assert cs.count == 2

    def test_full_box_single_cluster(self):
        dom = Box(5, (0, 0, 0))
        cs = clusters(VertexSet.from_box(dom), dom)
        assert cs.count == 1
        assert cs.diameter(1) == 4

    @pytest.mark.parametrize("ndim", [2, 3])
    def test_random_against_bfs(self, ndim):
        rng = np.random.default_rng(17)
        side = 16 if ndim == 3 else 32
        for _ in range(60):
            mask = rng.random((side,) * ndim) < 0.5
            got = kernels.label_components(mask)
            ref = bfs_components(mask)
            assert _partition(got) == _partition(ref)
            # first-occurrence numbering should match exactly, too
            assert np.array_equal(got, ref)

    def test_backends_identical(self):
        rng = np.random.default_rng(23)
        impls = kernels.backends()
        if len(impls) < 2:
            pytest.skip("compiled backend not built")
        for _ in range(25):
            mask = rng.random((12, 12, 12)) < 0.45
            outs = [impl.label_components(mask) for impl in impls.values()]
            assert np.array_equal(outs[0], outs[1])

    def test_empty_input(self):
        dom = Box(4, (0, 0))
        cs = clusters(VertexSet.empty(2), dom)
        assert cs.count == 0


class TestClusterSet:
    def test_metadata(self):
        dom = Box(6, (0, 0, 0))
        mask = np.zeros((6, 6, 6), bool)
        mask[0, 0, 0] = True
        mask[2:5, 2, 2] = True
        cs = clusters_from_mask(mask, dom)
        assert cs.count == 2
        sizes = sorted(cs.sizes.tolist())
        assert sizes == [1, 3]
        lab_line = cs.label_at((3, 2, 2))
        assert cs.diameter(lab_line) == 2
        assert cs.touches_domain_boundary(cs.label_at((0, 0, 0)))
        assert not cs.touches_domain_boundary(lab_line)

    def test_union_of(self):
        dom = Box(6, (0, 0, 0))
        mask = np.zeros((6, 6, 6), bool)
        mask[1, 1, 1] = True
        mask[3:5, 3, 3] = True
        cs = clusters_from_mask(mask, dom)
        X = VertexSet([[1, 1, 1], [3, 3, 3]])
        union, labs = cluster_union_of(cs, X)
        assert len(union) == 3
        assert len(labs) == 2
        none, labs2 = cluster_union_of(cs, VertexSet([[5, 5, 5]]))
        assert len(none) == 0 and labs2 == []

    def test_partition_property(self):
        rng = np.random.default_rng(5)
        dom = Box(10, (0, 0, 0))
        mask = rng.random((10, 10, 10)) < 0.5
        cs = clusters_from_mask(mask, dom)
        total = int(cs.sizes.sum())
        assert total == int(mask.sum())
