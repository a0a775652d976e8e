"""Dense lattice fields on a box, implicitly zero outside.

The Dirichlet form E(f, g) = -sum_x Delta f(x) g(x) is evaluated as the edge
sum sum_{x~y} (f(x)-f(y)) (g(x)-g(y)) over a one-cell inflation of the common
bounding box, which is exact for compactly supported fields.
"""

from __future__ import annotations

import numpy as np

from .errors import GeometryError
from .geometry import Box


class LatticeField:
    """Real or complex values over a box; zero outside."""

    __slots__ = ("lo", "hi", "values")

    def __init__(self, lo, hi, values: np.ndarray):
        self.lo = np.asarray(lo, dtype=np.int64)
        self.hi = np.asarray(hi, dtype=np.int64)
        values = np.asarray(values)
        if tuple(values.shape) != tuple(self.hi - self.lo):
            raise GeometryError(
                f"field shape {values.shape} does not match bounds "
                f"{tuple(self.hi - self.lo)}"
            )
        self.values = values

    @classmethod
    def zeros(cls, lo, hi, dtype=np.float64) -> "LatticeField":
        lo = np.asarray(lo, dtype=np.int64)
        hi = np.asarray(hi, dtype=np.int64)
        return cls(lo, hi, np.zeros(tuple(hi - lo), dtype=dtype))

    @classmethod
    def on_box(cls, box: Box, values: np.ndarray) -> "LatticeField":
        lo, hi = box.bounds()
        return cls(lo, hi, values)

    @classmethod
    def from_points(cls, coords: np.ndarray, values, pad: int = 0) -> "LatticeField":
        coords = np.asarray(coords, dtype=np.int64)
        lo = coords.min(axis=0) - pad
        hi = coords.max(axis=0) + 1 + pad
        field = cls.zeros(lo, hi)
        field.values[tuple((coords - lo).T)] = values
        return field

    @property
    def d(self) -> int:
        return len(self.lo)

    def at(self, points) -> np.ndarray:
        """Values at arbitrary lattice points (zero outside the box)."""
        pts = np.asarray(points, dtype=np.int64)
        single = pts.ndim == 1
        if single:
            pts = pts.reshape(1, -1)
        rel = pts - self.lo
        inside = np.all((rel >= 0) & (rel < (self.hi - self.lo)), axis=1)
        out = np.zeros(len(pts), dtype=self.values.dtype)
        if inside.any():
            sel = rel[inside]
            out[inside] = self.values[tuple(sel.T)]
        return out[0] if single else out

    def padded(self, pad: int) -> np.ndarray:
        """Values over the inflated box, zeros in the collar."""
        shape = tuple(self.hi - self.lo + 2 * pad)
        arr = np.zeros(shape, dtype=self.values.dtype)
        sl = tuple(slice(pad, pad + s) for s in self.values.shape)
        arr[sl] = self.values
        return arr

    def laplacian(self) -> "LatticeField":
        """Delta f (unnormalized) on the one-cell inflated box."""
        v = self.padded(1)
        out = -2 * self.d * v
        for axis in range(self.d):
            out += np.roll(v, 1, axis=axis) + np.roll(v, -1, axis=axis)
        # np.roll wraps around; the inflated collar is zero so wrapped
        # contributions vanish provided the support never touches the collar,
        # which padded(1) guarantees.
        return LatticeField(self.lo - 1, self.hi + 1, out)

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, scalar):
        return LatticeField(self.lo, self.hi, self.values * scalar)

    __rmul__ = __mul__

    def _binary(self, other: "LatticeField", op) -> "LatticeField":
        lo = np.minimum(self.lo, other.lo)
        hi = np.maximum(self.hi, other.hi)
        a = LatticeField.zeros(lo, hi, dtype=np.result_type(self.values, other.values))
        sl = tuple(slice(int(l - m), int(h - m)) for l, h, m in zip(self.lo, self.hi, lo))
        a.values[sl] = self.values
        sl2 = tuple(slice(int(l - m), int(h - m)) for l, h, m in zip(other.lo, other.hi, lo))
        a.values[sl2] = op(a.values[sl2], other.values)
        return a


def dirichlet_energy(f: LatticeField, g: LatticeField | None = None) -> float:
    """E(f, g) = -sum Delta f . g = sum over edges of grad f . grad g.

    Bilinear and symmetric; E(f, f) >= 0.  Exact for fields that vanish
    outside their boxes (which LatticeField guarantees by construction).
    """
    if g is None:
        g = f
    lo = np.minimum(f.lo, g.lo) - 1
    hi = np.maximum(f.hi, g.hi) + 1
    fv = _embed(f, lo, hi)
    gv = _embed(g, lo, hi)
    total = 0.0
    for axis in range(f.d):
        # bilinear (no conjugation), matching the Dirichlet inner product
        total += np.sum(np.diff(fv, axis=axis) * np.diff(gv, axis=axis))
    return total if np.iscomplexobj(fv) or np.iscomplexobj(gv) else float(total)


def field_pairing(weights_coords, weights_values, phi: LatticeField) -> float:
    """sum_x w(x) phi(x) for a finitely supported weight (used for the
    Dirichlet pairing E(f, phi) = sum (-Delta f)(x) phi(x))."""
    return float(np.dot(weights_values, phi.at(weights_coords)))


def _embed(f: LatticeField, lo, hi) -> np.ndarray:
    arr = np.zeros(tuple(hi - lo), dtype=f.values.dtype)
    sl = tuple(slice(int(a - b), int(c - b)) for a, c, b in zip(f.lo, f.hi, lo))
    arr[sl] = f.values
    return arr
