"""Z^d geometry: points, boxes at multiple scales, vertex sets, boundary
operators, box families, and columns.

Conventions used throughout the package:

* adjacency is nearest-neighbor (2d neighbors);
* boxes are half-open products [lo, hi) of integer intervals;
* a lattice box of scale L has an anchor with all coordinates in L*Z, and
  its enlargements around anchor z are
      B = z + [0, L)^d        U = z + [-L, 2L)^d
      D = z + [-3L, 4L)^d     K = z + [-100L, 101L)^d
  so the side lengths are L, 3L, 7L and 201L;
* "diameter" means the l-infinity diameter unless stated otherwise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import GeometryError, ScaleError

# (lo, hi) multipliers of L relative to the anchor, per box kind.
KIND_OFFSETS = {"B": (0, 1), "U": (-1, 2), "D": (-3, 4), "K": (-100, 101)}


def as_coords(points, d: int | None = None) -> np.ndarray:
    """Coerce points to an (n, d) int64 array."""
    arr = np.asarray(points, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, d or 0)
    if arr.ndim != 2:
        raise GeometryError(f"expected (n, d) coordinates, got shape {arr.shape}")
    if d is not None and arr.shape[1] != d:
        raise GeometryError(f"expected dimension {d}, got {arr.shape[1]}")
    return arr


def _lexsorted(coords: np.ndarray) -> np.ndarray:
    if len(coords) == 0:
        return coords
    order = np.lexsort(coords.T[::-1])
    return coords[order]


def neighbor_offsets(d: int) -> np.ndarray:
    """The 2d unit steps, fixed order: -e1, +e1, -e2, +e2, ..."""
    offs = np.zeros((2 * d, d), dtype=np.int64)
    for axis in range(d):
        offs[2 * axis, axis] = -1
        offs[2 * axis + 1, axis] = 1
    return offs


@dataclass(frozen=True)
class Box:
    """Half-open box of scale L anchored at z (kind selects the enlargement).

    Anchors of lattice boxes must lie on L*Z^d; domain boxes anchored at the
    origin satisfy this trivially.
    """

    L: int
    anchor: tuple
    kind: str = "B"

    def __post_init__(self):
        if self.L < 1:
            raise GeometryError(f"box scale must be >= 1, got {self.L}")
        if self.kind not in KIND_OFFSETS:
            raise GeometryError(f"unknown box kind {self.kind!r}")
        object.__setattr__(self, "anchor", tuple(int(a) for a in self.anchor))
        if any(a % self.L for a in self.anchor):
            raise GeometryError(
                f"anchor {self.anchor} is not aligned to the scale-{self.L} lattice"
            )

    @property
    def d(self) -> int:
        return len(self.anchor)

    @property
    def side(self) -> int:
        lo, hi = KIND_OFFSETS[self.kind]
        return (hi - lo) * self.L

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo_m, hi_m = KIND_OFFSETS[self.kind]
        z = np.asarray(self.anchor, dtype=np.int64)
        return z + lo_m * self.L, z + hi_m * self.L

    def with_kind(self, kind: str) -> "Box":
        return Box(self.L, self.anchor, kind)

    def enlarged(self, reach: int) -> tuple[np.ndarray, np.ndarray]:
        """Bounds of z + [-reach*L, (reach+1)*L)^d (reach=100 is kind K)."""
        z = np.asarray(self.anchor, dtype=np.int64)
        return z - reach * self.L, z + (reach + 1) * self.L

    def contains(self, points) -> np.ndarray:
        pts = as_coords(points, self.d)
        lo, hi = self.bounds()
        return np.all((pts >= lo) & (pts < hi), axis=1)

    def contains_bounds(self, lo2, hi2) -> bool:
        lo, hi = self.bounds()
        return bool(np.all(lo <= np.asarray(lo2)) and np.all(np.asarray(hi2) <= hi))

    def vertices(self) -> np.ndarray:
        lo, hi = self.bounds()
        axes = [np.arange(a, b, dtype=np.int64) for a, b in zip(lo, hi)]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=1)

    def vertex_count(self) -> int:
        lo, hi = self.bounds()
        return int(np.prod(hi - lo))

    def center(self) -> tuple:
        lo, hi = self.bounds()
        return tuple(int(c) for c in (lo + hi) // 2)

    def neighbors(self) -> list["Box"]:
        """The 2d boxes of the same scale adjacent to this one."""
        out = []
        for off in neighbor_offsets(self.d):
            out.append(Box(self.L, tuple(np.asarray(self.anchor) + off * self.L), self.kind))
        return out


def bounds_disjoint(lo1, hi1, lo2, hi2) -> bool:
    return bool(np.any(np.asarray(hi1) <= np.asarray(lo2)) or np.any(np.asarray(hi2) <= np.asarray(lo1)))


class VertexSet:
    """Finite set of lattice vertices with optional region bounds.

    Stored as a lexicographically sorted, deduplicated (n, d) int64 array.
    When ``bounds`` is set, boundary operators refuse sets that touch the
    representable-region edge instead of silently truncating.
    """

    __slots__ = ("coords", "d", "bounds", "_tuples")

    def __init__(self, coords, d: int | None = None, bounds=None):
        arr = as_coords(coords, d)
        if arr.shape[0]:
            arr = np.unique(arr, axis=0)
        self.coords = arr
        self.d = arr.shape[1] if arr.size else (d if d is not None else arr.shape[1])
        if self.d < 1:
            raise GeometryError("vertex set needs an explicit dimension when empty")
        self.bounds = None
        if bounds is not None:
            lo, hi = bounds
            self.bounds = (
                np.asarray(lo, dtype=np.int64).copy(),
                np.asarray(hi, dtype=np.int64).copy(),
            )
            if len(arr) and not (
                np.all(arr >= self.bounds[0]) and np.all(arr < self.bounds[1])
            ):
                raise GeometryError("vertex set lies outside its declared bounds")
        self._tuples = None

    @classmethod
    def empty(cls, d: int, bounds=None) -> "VertexSet":
        return cls(np.empty((0, d), dtype=np.int64), d=d, bounds=bounds)

    @classmethod
    def from_box(cls, box: Box, bounds=None) -> "VertexSet":
        return cls(box.vertices(), d=box.d, bounds=bounds)

    def __len__(self):
        return len(self.coords)

    def __iter__(self):
        return (tuple(int(v) for v in row) for row in self.coords)

    def tuples(self) -> frozenset:
        if self._tuples is None:
            self._tuples = frozenset(map(tuple, self.coords.tolist()))
        return self._tuples

    def __contains__(self, point) -> bool:
        return tuple(int(v) for v in point) in self.tuples()

    def __eq__(self, other):
        if not isinstance(other, VertexSet):
            return NotImplemented
        return self.coords.shape == other.coords.shape and bool(
            np.array_equal(self.coords, other.coords)
        )

    def __hash__(self):
        return hash((self.d, self.coords.tobytes()))

    def union(self, other: "VertexSet") -> "VertexSet":
        return VertexSet(
            np.concatenate([self.coords, other.coords]), d=self.d, bounds=self.bounds
        )

    def difference(self, other: "VertexSet") -> "VertexSet":
        keep = [t for t in self if t not in other.tuples()]
        return VertexSet(np.array(keep, dtype=np.int64).reshape(-1, self.d), d=self.d, bounds=self.bounds)

    def intersection(self, other: "VertexSet") -> "VertexSet":
        keep = [t for t in self if t in other.tuples()]
        return VertexSet(np.array(keep, dtype=np.int64).reshape(-1, self.d), d=self.d, bounds=self.bounds)

    def issubset(self, other: "VertexSet") -> bool:
        return self.tuples() <= other.tuples()

    def diameter(self) -> int:
        """l-infinity diameter (0 for singletons and the empty set)."""
        if len(self.coords) == 0:
            return 0
        return int((self.coords.max(axis=0) - self.coords.min(axis=0)).max())

    def graph_diameter(self) -> int:
        """l1 (graph-metric lower bound) diameter; exposed alongside the
        l-infinity default because scale thresholds can be read either way."""
        if len(self.coords) == 0:
            return 0
        return int((self.coords.max(axis=0) - self.coords.min(axis=0)).sum())

    def shifted(self, offset) -> "VertexSet":
        off = np.asarray(offset, dtype=np.int64)
        return VertexSet(self.coords + off, d=self.d)

    def _check_margin(self):
        if self.bounds is None or len(self.coords) == 0:
            return
        lo, hi = self.bounds
        if (self.coords == lo).any() or (self.coords == hi - 1).any():
            raise GeometryError(
                "set touches the representable-region edge; enlarge the region "
                "instead of truncating boundaries"
            )

    # -- CSV interchange ---------------------------------------------------

    def to_csv(self, path) -> None:
        """One vertex per row, d integer columns, sorted."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in _lexsorted(self.coords):
                writer.writerow([int(v) for v in row])

    @classmethod
    def from_csv(cls, path, d: int | None = None, bounds=None) -> "VertexSet":
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if row:
                    rows.append([int(v) for v in row])
        if not rows:
            if d is None:
                raise GeometryError("empty CSV needs an explicit dimension")
            return cls.empty(d, bounds=bounds)
        return cls(np.array(rows, dtype=np.int64), d=d, bounds=bounds)


def boundary_ops(S: VertexSet) -> tuple[VertexSet, VertexSet, VertexSet]:
    """Inner boundary, outer boundary, and closure of a finite set."""
    S._check_margin()
    if len(S) == 0:
        e = VertexSet.empty(S.d, bounds=S.bounds)
        return e, e, e
    offs = neighbor_offsets(S.d)
    members = S.tuples()
    shifted = (S.coords[None, :, :] + offs[:, None, :]).reshape(-1, S.d)
    # inner: site with at least one neighbor outside
    neigh_in = np.array(
        [t in members for t in map(tuple, shifted.tolist())], dtype=bool
    ).reshape(len(offs), len(S))
    inner_mask = ~neigh_in.all(axis=0)
    inner = VertexSet(S.coords[inner_mask], d=S.d, bounds=S.bounds)
    outer_rows = shifted[~neigh_in.reshape(-1)]
    outer = VertexSet(outer_rows, d=S.d, bounds=S.bounds) if len(outer_rows) else VertexSet.empty(S.d, bounds=S.bounds)
    closure = S.union(outer)
    return inner, outer, closure


def closure(S: VertexSet) -> VertexSet:
    return boundary_ops(S)[2]


@dataclass
class BoxFamily:
    """A finite family of lattice boxes, possibly of mixed scales."""

    boxes: list
    well_separated: bool = False

    def __post_init__(self):
        self.boxes = list(self.boxes)

    def __len__(self):
        return len(self.boxes)

    def __iter__(self):
        return iter(self.boxes)

    def scales(self) -> list[int]:
        return sorted({b.L for b in self.boxes})

    def union_vertices(self) -> np.ndarray:
        if not self.boxes:
            return np.empty((0, 0), dtype=np.int64)
        return np.unique(np.concatenate([b.vertices() for b in self.boxes]), axis=0)

    def check_well_separated(self, reach: int = 100) -> bool:
        """True iff the reach-enlargements are pairwise disjoint."""
        n = len(self.boxes)
        spans = [b.enlarged(reach) for b in self.boxes]
        for i in range(n):
            for j in range(i + 1, n):
                if not bounds_disjoint(*spans[i], *spans[j]):
                    return False
        return True


def boxes_hit(S: VertexSet, L: int) -> BoxFamily:
    """The scale-L boxes containing a vertex of S."""
    if L < 1:
        raise ScaleError(f"box scale must be >= 1, got {L}")
    if len(S) == 0:
        return BoxFamily([])
    anchors = np.unique((S.coords // L) * L, axis=0)
    return BoxFamily([Box(L, tuple(a)) for a in anchors])


def box_family_boundary(family: BoxFamily) -> BoxFamily:
    """Inner boundary of a single-scale family viewed in the coarse lattice
    L*Z^d: boxes with at least one of the 2d box-neighbors missing."""
    if len(family) == 0:
        return BoxFamily([])
    scales = family.scales()
    if len(scales) != 1:
        raise ScaleError("box-family boundary is defined per scale")
    L = scales[0]
    anchors = {b.anchor for b in family}
    d = family.boxes[0].d
    offs = neighbor_offsets(d) * L
    out = []
    for b in family.boxes:
        z = np.asarray(b.anchor)
        if any(tuple(z + o) not in anchors for o in offs):
            out.append(b)
    return BoxFamily(out)


def maximal_well_separated(family: BoxFamily, reach: int = 100) -> BoxFamily:
    """Greedy maximal well-separated subfamily.

    Scans scales from the largest downward (anchors ascending within a scale)
    and keeps a box whenever its reach-enlargement is disjoint from the
    enlargements of everything kept so far.  For a single-scale family of n
    boxes the output has at least (2*reach+1)^-d * n boxes.
    """
    ordered = sorted(
        family.boxes,
        key=lambda b: (-b.L, b.anchor),
    )
    kept: list[Box] = []
    kept_spans: list[tuple[np.ndarray, np.ndarray]] = []
    for box in ordered:
        span = box.enlarged(reach)
        if all(bounds_disjoint(*span, *s) for s in kept_spans):
            kept.append(box)
            kept_spans.append(span)
    return BoxFamily(kept, well_separated=True)


def lattice_boxes_within(lo, hi, cell: int) -> list[Box]:
    """All boxes of the cell-lattice (anchors in cell*Z^d) contained in
    [lo, hi)."""
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    first = -((-lo) // cell) * cell  # ceil to the cell lattice
    axes = [np.arange(f, h - cell + 1, cell, dtype=np.int64) for f, h in zip(first, hi)]
    if any(len(a) == 0 for a in axes):
        return []
    grid = np.meshgrid(*axes, indexing="ij")
    anchors = np.stack([g.ravel() for g in grid], axis=1)
    return [Box(cell, tuple(a)) for a in anchors]


def columns(region: Box, cell: int, axis: int) -> list[list[Box]]:
    """Group the cell-lattice boxes of a region into columns parallel to an
    axis (a column = fixed anchor coordinates on all other axes)."""
    d = region.d
    if not (0 <= axis < d):
        raise GeometryError(f"axis {axis} out of range for dimension {d}")
    lo, hi = region.bounds()
    if np.any((hi - lo) % cell):
        raise ScaleError(f"cell {cell} does not divide region side {tuple(hi - lo)}")
    boxes = lattice_boxes_within(lo, hi, cell)
    cols: dict[tuple, list[Box]] = {}
    for b in boxes:
        key = tuple(a for i, a in enumerate(b.anchor) if i != axis)
        cols.setdefault(key, []).append(b)
    out = []
    for key in sorted(cols):
        col = sorted(cols[key], key=lambda b: b.anchor[axis])
        out.append(col)
    return out
