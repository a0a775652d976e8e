"""Free-space lattice Green function on Z^d, d >= 3.

Normalization: g solves (-Delta) g(., y) = delta_y with the unnormalized
Laplacian Delta f(x) = sum_{y~x} (f(y) - f(x)).  Equivalently

    g(0, x) = int_{[-pi,pi]^d} cos(k.x) / (2 sum_j (1 - cos k_j)) dk/(2pi)^d
            = (2d)^{-1} * E[number of visits of SRW to x started at 0] * 2d/d(y)

i.e. the walk Green function divided by the degree 2d.  Numerically we use
the equivalent continuous-time (Bessel) representation

    g(0, x) = int_0^inf prod_j e^{-2t} I_{x_j}(2t) dt,

whose integrand is smooth, positive and O(t^{-d/2}); the momentum integral
is kept in the test suite as an independent oracle.
"""

from __future__ import annotations

import math
import os
import struct
from pathlib import Path

import numpy as np
from scipy import integrate, special

from .errors import AccuracyError, GeometryError, NonTransientError

MAGIC = b"GFFG"
FORMAT_VERSION = 1


def _check_dim(d: int) -> None:
    if d < 3:
        raise NonTransientError(
            f"free Green function requires a transient lattice (d >= 3), got d={d}"
        )


def _bessel_integrand(x: np.ndarray, t):
    t = np.asarray(t, dtype=np.float64)
    vals = special.ive(x[:, None], 2.0 * t[None, :])
    return vals.prod(axis=0)


def free_green(d: int, displacement, tol: float = 1e-10):
    """Green value for one displacement by adaptive quadrature.

    Raises AccuracyError carrying the achieved error estimate when the
    quadrature cannot certify ``tol``.
    """
    _check_dim(d)
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = np.abs(np.asarray(displacement, dtype=np.int64))
    if x.shape != (d,):
        raise GeometryError(f"displacement must have length {d}")
    f = lambda t: float(np.prod(special.ive(x, 2.0 * t)))
    val, err = integrate.quad(f, 0.0, np.inf, epsabs=tol / 4, epsrel=tol / 4, limit=500)
    if err > tol:
        raise AccuracyError(
            f"lattice Green quadrature reached {err:.3e} > tol {tol:.3e}",
            achieved=err,
            requested=tol,
        )
    return val


def green_asymptotic(d: int, radius: float) -> float:
    """Leading large-distance behavior g ~ c_d * r^(2-d) (Euclidean r)."""
    _check_dim(d)
    c_d = math.gamma(d / 2 - 1) / (4 * math.pi ** (d / 2))
    return c_d * radius ** (2 - d)


def _fixed_nodes(max_abs: int, d: int):
    """Composite Gauss-Legendre nodes for the bulk integrator.

    Panels grow geometrically to A ~ 4*max_abs^2 (the ive product peaks near
    t ~ |x|^2/2), then the tail is mapped to (0, 1] by t = A/u^2.
    """
    A = max(64.0, 4.0 * max(1, max_abs) ** 2)
    edges = [0.0, 0.5, 1.0]
    while edges[-1] < A:
        edges.append(min(edges[-1] * 2, A))
    xs, ws = np.polynomial.legendre.leggauss(32)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (b - a) * xs + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * ws)
    # tail: int_A^inf f dt = int_0^1 f(A/u^2) * 2A/u^3 du
    xu, wu = np.polynomial.legendre.leggauss(24)
    u = 0.5 * xu + 0.5
    nodes.append(A / u**2)
    weights.append(0.5 * wu * 2.0 * A / u**3)
    return np.concatenate(nodes), np.concatenate(weights)


class FreeGreenTable:
    """Cached free-space Green values keyed by displacement.

    Values over the octant grid [0, R]^d are produced in bulk by the fixed
    quadrature (validated against the adaptive integrator on a sample of
    displacements), are symmetric under coordinate sign flips and
    permutations by construction, and can be stored to the little-endian
    binary cache format (header GFFG, version, d, mode, tol).
    """

    mode = "free"

    def __init__(self, d: int, tol: float = 1e-10):
        _check_dim(d)
        self.d = d
        self.tol = float(tol)
        self._grid: np.ndarray | None = None  # values over [0, R]^d
        self._R = -1

    # -- bulk evaluation ----------------------------------------------------

    def _build_grid(self, R: int) -> None:
        nodes, weights = _fixed_nodes(R, self.d)
        axes = [np.arange(R + 1)] * self.d
        mesh = np.meshgrid(*axes, indexing="ij")
        disp = np.stack([m.ravel() for m in mesh], axis=1)
        # product over axes of ive(n_j, 2t): evaluate per axis per order, reuse
        per_order = special.ive(np.arange(R + 1)[:, None], 2.0 * nodes[None, :])
        vals = np.ones((disp.shape[0], len(nodes)))
        for j in range(self.d):
            vals *= per_order[disp[:, j]]
        grid = (vals @ weights).reshape([R + 1] * self.d)
        self._grid = grid
        self._R = R
        self._validate()

    def _validate(self) -> None:
        rng = np.random.default_rng(12345)
        n_check = min(6, (self._R + 1) ** self.d)
        for _ in range(n_check):
            x = rng.integers(0, self._R + 1, size=self.d)
            ref = free_green(self.d, x, tol=min(self.tol, 1e-10))
            got = self._grid[tuple(x)]
            if abs(got - ref) > self.tol:
                raise AccuracyError(
                    "bulk Green grid disagrees with adaptive quadrature",
                    achieved=abs(got - ref),
                    requested=self.tol,
                )

    def ensure(self, R: int) -> None:
        if R > self._R:
            self._build_grid(int(R))

    def values(self, displacements) -> np.ndarray:
        """Vectorized lookup for an (n, d) array of displacements."""
        disp = np.abs(np.asarray(displacements, dtype=np.int64))
        if disp.ndim == 1:
            disp = disp.reshape(1, -1)
        if disp.shape[1] != self.d:
            raise GeometryError(f"displacements must have {self.d} columns")
        R = int(disp.max()) if disp.size else 0
        self.ensure(R)
        return self._grid[tuple(disp.T)]

    def value(self, displacement) -> float:
        return float(self.values(np.asarray(displacement).reshape(1, -1))[0])

    def gram(self, coords: np.ndarray) -> np.ndarray:
        """Green matrix g(x_i, x_j) for a coordinate array (n, d)."""
        diff = coords[:, None, :] - coords[None, :, :]
        n = coords.shape[0]
        return self.values(diff.reshape(n * n, self.d)).reshape(n, n)

    # -- binary cache (little-endian) ----------------------------------------
    # header: magic "GFFG", version u32, d u32, mode u8 (0 = free), tol f64
    # records: sorted (displacement d*i32, value f64)

    def save(self, path) -> None:
        if self._grid is None:
            raise ValueError("nothing to save: table is empty")
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        axes = [np.arange(self._R + 1)] * self.d
        mesh = np.meshgrid(*axes, indexing="ij")
        disp = np.stack([m.ravel() for m in mesh], axis=1).astype(np.int32)
        vals = self._grid.ravel()
        order = np.lexsort(disp.T[::-1])
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<IIBd", FORMAT_VERSION, self.d, 0, self.tol))
            rec = np.empty(
                len(vals),
                dtype=np.dtype(
                    [("disp", "<i4", (self.d,)), ("val", "<f8")], align=False
                ),
            )
            rec["disp"] = disp[order]
            rec["val"] = vals[order]
            fh.write(rec.tobytes())

    @classmethod
    def load(cls, path) -> "FreeGreenTable":
        with open(path, "rb") as fh:
            if fh.read(4) != MAGIC:
                raise ValueError(f"{path}: not a Green cache file")
            version, d, mode, tol = struct.unpack("<IIBd", fh.read(17))
            if version != FORMAT_VERSION:
                raise ValueError(f"{path}: unsupported cache version {version}")
            if mode != 0:
                raise ValueError(f"{path}: only free-mode caches are file-backed")
            body = fh.read()
        table = cls(d, tol)
        rec = np.frombuffer(
            body, dtype=np.dtype([("disp", "<i4", (d,)), ("val", "<f8")], align=False)
        )
        R = int(rec["disp"].max())
        grid = np.full([R + 1] * d, np.nan)
        grid[tuple(rec["disp"].astype(np.int64).T)] = rec["val"]
        if np.isnan(grid).any():
            raise ValueError(f"{path}: cache does not cover the full octant grid")
        table._grid = grid
        table._R = R
        return table


def cache_dir() -> Path:
    env = os.environ.get("GFFPERC_CACHE_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "gffperc"


_shared_tables: dict[tuple[int, float], FreeGreenTable] = {}


def shared_table(d: int, tol: float = 1e-10, use_disk: bool = True) -> FreeGreenTable:
    """Process-wide table, backed by the on-disk cache when present."""
    key = (d, tol)
    if key not in _shared_tables:
        table = None
        path = cache_dir() / f"free_green_d{d}_tol{tol:.0e}.gffg"
        if use_disk and path.exists():
            try:
                table = FreeGreenTable.load(path)
                if table.d != d:
                    table = None
            except (ValueError, OSError):
                table = None
        _shared_tables[key] = table if table is not None else FreeGreenTable(d, tol)
    return _shared_tables[key]


def persist_shared(d: int, tol: float = 1e-10) -> Path | None:
    table = _shared_tables.get((d, tol))
    if table is None or table._grid is None:
        return None
    path = cache_dir() / f"free_green_d{d}_tol{tol:.0e}.gffg"
    table.save(path)
    return path
