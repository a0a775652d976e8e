"""Lattice potential theory: equilibrium measures, capacity (exact and
Monte Carlo), harmonic potentials, killed Green functions, sweeping and
sandwich checks.

Capacity conventions follow the degree-2d normalization: the equilibrium
measure solves sum_y g(x, y) e(y) = 1 on K (the last-exit identity) and
cap(K) is its total mass.  Infinite-lattice quantities use free-space Green
entries; domain-killed variants are exposed alongside for finite-volume
work and cross-checks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .errors import (
    ConditioningError,
    GeometryError,
    SizeError,
    SolverError,
)
from .fields import LatticeField, dirichlet_energy
from .geometry import Box, VertexSet, boundary_ops, neighbor_offsets
from .green import FreeGreenTable, green_asymptotic, shared_table
from .rng import substream_seed

log = logging.getLogger(__name__)

DENSE_SOLVE_LIMIT = 4000


@dataclass
class EquilibriumMeasure:
    support: VertexSet
    weights: np.ndarray
    total: float  # = cap(support)
    residual: float

    @property
    def capacity(self) -> float:
        return self.total

    def to_csv(self, path) -> None:
        """Columns x1..xd, weight."""
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i+1}" for i in range(self.support.d)] + ["weight"])
            for row, wt in zip(self.support.coords, self.weights):
                w.writerow([int(v) for v in row] + [repr(float(wt))])


@dataclass
class HarmonicPotential:
    target: VertexSet
    domain: Box
    field: LatticeField
    energy: float
    residual: float

    def value_at(self, points) -> np.ndarray:
        return self.field.at(points)


def equilibrium_exact(
    K: VertexSet,
    green: FreeGreenTable | None = None,
    *,
    weight_tol: float = 1e-9,
    size_limit: int | None = None,
) -> EquilibriumMeasure:
    """Solve the dense last-exit system sum_y g(x,y) e(y) = 1 on K.

    ``size_limit`` is a caller policy (the observables event path passes the
    4000-vertex dense limit and redirects to capacity_mc beyond it).
    """
    if green is None:
        green = shared_table(K.d)
    n = len(K)
    if n == 0:
        return EquilibriumMeasure(K, np.zeros(0), 0.0, 0.0)
    if size_limit is not None and n > size_limit:
        raise SizeError(
            f"{n} vertices exceed the dense solve limit {size_limit}; "
            "use capacity_mc instead"
        )
    G = green.gram(K.coords)
    rhs = np.ones(n)
    try:
        e = np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"equilibrium solve failed: {exc}") from exc
    residual = float(np.abs(G @ e - rhs).max())
    if residual > 1e-6:
        est = np.linalg.cond(G) if n <= 1200 else None
        raise ConditioningError(
            f"equilibrium solve residual {residual:.3e}", estimate=est
        )
    neg = e < 0
    if neg.any():
        worst = float(e[neg].min())
        if abs(worst) > weight_tol * max(1.0, float(np.abs(e).max())):
            est = np.linalg.cond(G) if n <= 1200 else None
            raise ConditioningError(
                f"equilibrium weight {worst:.3e} below -tolerance; Gram matrix "
                "suspect",
                estimate=est,
            )
        # weights within solver noise of zero are clipped; only clips beyond
        # 1e3 machine epsilons are worth surfacing
        level = logging.WARNING if abs(worst) > 1e-12 else logging.DEBUG
        log.log(
            level,
            "clipping %d slightly negative equilibrium weights (min %.3e)",
            int(neg.sum()),
            worst,
        )
        e = np.where(neg, 0.0, e)
    return EquilibriumMeasure(K, e, float(e.sum()), residual)


def cap_bounds(K: VertexSet, green: FreeGreenTable | None = None) -> tuple[float, float]:
    """Sandwich |K|/sup_x sum_y g <= cap(K) <= |K|/inf_x sum_y g."""
    if len(K) == 0:
        return 0.0, 0.0
    if green is None:
        green = shared_table(K.d)
    rowsums = green.gram(K.coords).sum(axis=1)
    n = len(K)
    return n / float(rowsums.max()), n / float(rowsums.min())


def capacity_mc(
    K: VertexSet,
    walks: int,
    escape_radius: int,
    seed: int,
    *,
    green: FreeGreenTable | None = None,
) -> tuple[float, float]:
    """Monte Carlo capacity: sum_x 2d P_x[no return to K before escaping],
    corrected for returns from beyond the escape radius.

    The raw estimate overshoots because a walk counted as escaped may still
    come back from afar; to leading order raw = cap / (1 - cap g_asym(R)),
    inverted here.  Returns (estimate, stderr); the correction factor is
    logged.
    """
    if walks < 1:
        raise ValueError("walks must be >= 1")
    n = len(K)
    if n == 0:
        return 0.0, 0.0
    d = K.d
    diam = K.diameter()
    if escape_radius <= 2 * diam:
        raise GeometryError(
            f"escape radius {escape_radius} must exceed twice the diameter {diam}"
        )
    center = K.coords.mean(axis=0).round().astype(np.int64)
    lo = K.coords.min(axis=0)
    hi = K.coords.max(axis=0) + 1
    shape = hi - lo
    member = np.zeros(tuple(shape), dtype=np.uint8)
    member[tuple((K.coords - lo).T)] = 1

    per = walks // n
    extra = walks % n
    total = 0.0
    var = 0.0
    r2 = float(escape_radius) ** 2
    for i, x in enumerate(K.coords):
        nw = per + (1 if i < extra else 0)
        if nw == 0:
            continue
        esc = kernels.escape_count(
            member.ravel(),
            lo.astype(np.int64),
            shape.astype(np.int64),
            x.astype(np.int64),
            r2,
            center,
            nw,
            substream_seed(seed, i),
        )
        p = esc / nw
        total += 2 * d * p
        var += (2 * d) ** 2 * p * (1 - p) / nw
    raw = total
    g_far = green_asymptotic(d, float(escape_radius))
    corrected = raw / (1.0 + raw * g_far)
    log.info(
        "capacity_mc raw=%.6g corrected=%.6g (finite-radius factor %.6g)",
        raw,
        corrected,
        1.0 / (1.0 + raw * g_far),
    )
    return corrected, float(np.sqrt(var))


# -- domain-killed machinery -------------------------------------------------


class DomainSolver:
    """Sparse factorization of (-Delta) on a box with zero outside.

    Provides killed Green columns, harmonic potentials, Dirichlet solves and
    the LDL^T factor used by the exact sampler.
    """

    def __init__(self, domain: Box):
        self.domain = domain
        self.lo, self.hi = domain.bounds()
        self.shape = tuple(int(s) for s in (self.hi - self.lo))
        self.n = int(np.prod(self.shape))
        self.d = domain.d
        self._lu = None
        self._ldl = None
        self._A = None
        self._green_cols: dict[tuple, np.ndarray] = {}

    def _laplacian(self) -> sp.csc_matrix:
        if self._A is not None:
            return self._A
        d = self.d
        mats = []
        eye = [sp.identity(s, format="csr") for s in self.shape]
        for axis in range(d):
            s = self.shape[axis]
            T = sp.diags(
                [-np.ones(s - 1), 2.0 * np.ones(s), -np.ones(s - 1)],
                [-1, 0, 1],
                format="csr",
            )
            term = None
            for j in range(d):
                M = T if j == axis else eye[j]
                term = M if term is None else sp.kron(term, M, format="csr")
            mats.append(term)
        self._A = sum(mats).tocsc()
        return self._A

    @property
    def lu(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(self._laplacian())
            except RuntimeError as exc:  # pragma: no cover - singular never expected
                raise SolverError(f"factorization failed: {exc}") from exc
        return self._lu

    def ldl(self):
        """(-Delta)[q][:, q] = L diag(dvals) L^T with q = argsort(perm_c)."""
        if self._ldl is None:
            A = self._laplacian()
            lu = spla.splu(
                A,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options=dict(SymmetricMode=True),
            )
            dvals = lu.U.diagonal()
            if (dvals <= 0).any():
                raise SolverError("LDL^T factor is not positive definite")
            q = np.argsort(lu.perm_c)
            self._ldl = (sp.csr_matrix(lu.L.T), dvals, q)
        return self._ldl

    def index(self, points) -> np.ndarray:
        rel = np.asarray(points, dtype=np.int64) - self.lo
        if np.any(rel < 0) or np.any(rel >= np.asarray(self.shape)):
            raise GeometryError("point outside domain")
        return np.ravel_multi_index(tuple(rel.T), self.shape)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        x = self.lu.solve(rhs)
        res = float(np.abs(rhs - (self._laplacian() @ x)).max()) if rhs.ndim == 1 else None
        if res is not None and res > 1e-7 * max(1.0, float(np.abs(rhs).max())):
            raise SolverError("Dirichlet solve residual too large", residual=res)
        return x

    def killed_green(self, x, y) -> float:
        """g_K(x, y): zero when either point is outside the domain."""
        x = np.asarray(x, dtype=np.int64)
        y = np.asarray(y, dtype=np.int64)
        for p in (x, y):
            rel = p - self.lo
            if np.any(rel < 0) or np.any(rel >= np.asarray(self.shape)):
                return 0.0
        key = tuple(int(v) for v in y)
        if key not in self._green_cols:
            rhs = np.zeros(self.n)
            rhs[self.index(y.reshape(1, -1))[0]] = 1.0
            self._green_cols[key] = self.lu.solve(rhs)
        return float(self._green_cols[key][self.index(x.reshape(1, -1))[0]])

    def killed_gram(self, coords: np.ndarray) -> np.ndarray:
        idx = self.index(coords)
        cols = []
        for y, i in zip(coords, idx):
            key = tuple(int(v) for v in y)
            if key not in self._green_cols:
                rhs = np.zeros(self.n)
                rhs[i] = 1.0
                self._green_cols[key] = self.lu.solve(rhs)
            cols.append(self._green_cols[key][idx])
        return np.array(cols).T

    def killed_equilibrium(self, K: VertexSet) -> EquilibriumMeasure:
        """Equilibrium measure of K for the domain-killed walk, computed
        from one harmonic-potential solve: e = (-Delta) f_K on K."""
        hp = harmonic_potential(K, self.domain, solver=self)
        neg_lap = hp.field.laplacian() * (-1.0)
        e = neg_lap.at(K.coords)
        return EquilibriumMeasure(K, e, float(e.sum()), hp.residual)


_domain_solvers: dict[tuple, DomainSolver] = {}


def domain_solver(domain: Box) -> DomainSolver:
    key = (domain.L, domain.anchor, domain.kind)
    if key not in _domain_solvers:
        _domain_solvers[key] = DomainSolver(domain)
    return _domain_solvers[key]


def killed_green(domain: Box, x, y) -> float:
    """Green function of the walk killed on leaving the domain box."""
    return domain_solver(domain).killed_green(x, y)


def harmonic_potential(
    K: VertexSet, domain: Box, *, solver: DomainSolver | None = None
) -> HarmonicPotential:
    """Dirichlet problem: 1 on K, 0 outside the domain, harmonic between."""
    solver = solver or domain_solver(domain)
    lo, hi = solver.lo, solver.hi
    if len(K) == 0:
        f = LatticeField.zeros(lo, hi)
        return HarmonicPotential(K, domain, f, 0.0, 0.0)
    _, _, clo = boundary_ops(K)
    if not (np.all(K.coords > lo) and np.all(K.coords < hi - 1)):
        raise GeometryError("closure of K must stay strictly inside the domain")
    mask = np.zeros(solver.shape, dtype=bool)
    mask[tuple((K.coords - lo).T)] = True
    free = ~mask.ravel()
    A = solver._laplacian()
    # move the K = 1 boundary condition to the right-hand side
    x_full = np.zeros(solver.n)
    x_full[~free] = 1.0
    rhs = -A @ x_full
    Af = A[free][:, free]
    try:
        sol = spla.spsolve(Af.tocsc(), rhs[free])
    except Exception as exc:
        raise SolverError(f"harmonic potential solve failed: {exc}") from exc
    x_full[free] = sol
    residual = float(np.abs((A @ x_full)[free]).max())
    if residual > 1e-7:
        raise SolverError("harmonic potential residual too large", residual=residual)
    fld = LatticeField(lo, hi, x_full.reshape(solver.shape))
    energy = dirichlet_energy(fld)
    return HarmonicPotential(K, domain, fld, float(energy), residual)


def sweeping_check(
    K: VertexSet, Kp: VertexSet, green: FreeGreenTable | None = None
) -> float:
    """Residual of cap(K) = sum_x e_Kp(x) P_x[hit K], with the hitting
    probability evaluated exactly as sum_y g(x, y) e_K(y)."""
    if not K.issubset(Kp):
        raise GeometryError("sweeping check needs K contained in Kp")
    if green is None:
        green = shared_table(K.d)
    eK = equilibrium_exact(K, green)
    eKp = equilibrium_exact(Kp, green)
    if len(K) == 0:
        return 0.0
    diff = Kp.coords[:, None, :] - K.coords[None, :, :]
    G = green.values(diff.reshape(-1, K.d)).reshape(len(Kp), len(K))
    hit = G @ eK.weights  # P_x[H_K < infinity] by last exit
    swept = float(np.dot(eKp.weights, hit))
    return abs(eK.total - swept)
