"""Level-set components on a finite domain box.

Production labeling goes through the kernel backend (union-find in the
compiled core, ndimage in the fallback); a BFS flood fill lives in the test
suite as the independent oracle, never here.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import GeometryError
from .geometry import Box, VertexSet, neighbor_offsets


class ClusterSet:
    """Partition of a level set into nearest-neighbor components.

    ``labels`` is an int32 array over the domain box (0 = background);
    cluster ids run from 1 to ``count`` in raster order of first occurrence.
    """

    def __init__(self, labels: np.ndarray, domain: Box):
        self.labels = labels
        self.domain = domain
        self.count = int(labels.max()) if labels.size else 0
        self._lo, self._hi = domain.bounds()
        self._flat = labels.ravel()
        counts = np.bincount(self._flat, minlength=self.count + 1)
        self.sizes = counts[1:]
        # per-cluster bounding boxes for diameters / boundary flags
        self._mins = None
        self._maxs = None

    def _ensure_boxes(self):
        if self._mins is not None:
            return
        d = self.domain.d
        shape = self.labels.shape
        self._mins = np.full((self.count + 1, d), np.iinfo(np.int64).max)
        self._maxs = np.full((self.count + 1, d), np.iinfo(np.int64).min)
        idx = np.nonzero(self.labels)
        labs = self.labels[idx]
        for axis in range(d):
            coords = idx[axis]
            np.minimum.at(self._mins[:, axis], labs, coords)
            np.maximum.at(self._maxs[:, axis], labs, coords)

    def diameter(self, label: int) -> int:
        """l-infinity diameter of one cluster."""
        self._ensure_boxes()
        return int((self._maxs[label] - self._mins[label]).max())

    def diameters(self) -> np.ndarray:
        self._ensure_boxes()
        if self.count == 0:
            return np.zeros(0, dtype=np.int64)
        return (self._maxs[1:] - self._mins[1:]).max(axis=1)

    def touches_domain_boundary(self, label: int) -> bool:
        self._ensure_boxes()
        shape = np.asarray(self.labels.shape)
        return bool(
            (self._mins[label] == 0).any() or (self._maxs[label] == shape - 1).any()
        )

    def vertices(self, label: int) -> VertexSet:
        idx = np.argwhere(self.labels == label)
        return VertexSet(idx + self._lo, d=self.domain.d)

    def label_at(self, point) -> int:
        rel = np.asarray(point, dtype=np.int64) - self._lo
        if np.any(rel < 0) or np.any(rel >= self.labels.shape):
            raise GeometryError(f"point {tuple(point)} outside domain")
        return int(self.labels[tuple(rel)])

    def labels_at(self, points) -> np.ndarray:
        rel = np.asarray(points, dtype=np.int64) - self._lo
        if np.any(rel < 0) or np.any(rel >= self.labels.shape):
            raise GeometryError("points outside domain")
        return self.labels[tuple(rel.T)]

    def boundary(self, label: int) -> tuple[VertexSet, VertexSet]:
        """Inner and outer boundary of one cluster (within Z^d, not clipped
        to the domain: callers enforce margins beforehand)."""
        from .geometry import boundary_ops

        vs = self.vertices(label)
        inner, outer, _ = boundary_ops(vs)
        return inner, outer

    def min_face_distance(self, label: int) -> int:
        """Distance from the cluster to the domain faces (0 = touching)."""
        self._ensure_boxes()
        shape = np.asarray(self.labels.shape)
        return int(min(self._mins[label].min(), (shape - 1 - self._maxs[label]).min()))


def clusters(level_set: VertexSet, domain: Box) -> ClusterSet:
    """Cluster decomposition of an explicit vertex set inside a box."""
    lo, hi = domain.bounds()
    shape = tuple(int(s) for s in (hi - lo))
    mask = np.zeros(shape, dtype=np.uint8)
    if len(level_set):
        rel = level_set.coords - lo
        if np.any(rel < 0) or np.any(rel >= np.asarray(shape)):
            raise GeometryError("level set is not contained in the domain box")
        mask[tuple(rel.T)] = 1
    return ClusterSet(kernels.label_components(mask), domain)


def clusters_from_mask(mask: np.ndarray, domain: Box) -> ClusterSet:
    """Fast path used by the samplers (mask already laid out on the box)."""
    return ClusterSet(kernels.label_components(mask.astype(np.uint8, copy=False)), domain)


def cluster_union_of(cs: ClusterSet, X: VertexSet) -> tuple[VertexSet, list[int]]:
    """Union of the clusters meeting X, with their labels."""
    if len(X) == 0:
        return VertexSet.empty(cs.domain.d), []
    labs = sorted({int(l) for l in cs.labels_at(X.coords) if l > 0})
    if not labs:
        return VertexSet.empty(cs.domain.d), []
    sel = np.isin(cs.labels, labs)
    verts = np.argwhere(sel) + cs._lo
    return VertexSet(verts, d=cs.domain.d), labs
