"""Level-set percolation observables and capacity-decay events.

Finite-volume conventions (recorded in every manifest):

* the source set X defaults to the domain-center vertex ("origin");
* a cluster counts as infinite (margin rule) iff it reaches within
  ``margin`` of the domain faces, which is also the "connects to the
  boundary shell" event for the density estimator;
* the empty cluster is finite with capacity 0 and lands in the N = 1
  capacity bracket;
* "C_X connected" requires X to be contained in one cluster (in particular
  every x in X open), so the k-point functions vanish at very high levels.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clusters import ClusterSet, cluster_union_of, clusters_from_mask
from .errors import GeometryError, SizeError
from .geometry import Box, VertexSet, boundary_ops
from .green import FreeGreenTable, shared_table
from .potential import DENSE_SOLVE_LIMIT, capacity_mc, equilibrium_exact
from .rng import SeedLineage, substream_seed
from .sampling import FieldSample, make_sampler


@dataclass
class EstimatorAccumulator:
    """Mergeable Monte Carlo tally; merge is associative and commutative."""

    count: int = 0
    total: float = 0.0
    sumsq: float = 0.0
    lineage: SeedLineage | None = None
    margin: int | None = None

    def add(self, value: float) -> None:
        self.count += 1
        self.total += value
        self.sumsq += value * value

    def merge(self, other: "EstimatorAccumulator") -> "EstimatorAccumulator":
        return EstimatorAccumulator(
            self.count + other.count,
            self.total + other.total,
            self.sumsq + other.sumsq,
            self.lineage or other.lineage,
            self.margin if self.margin is not None else other.margin,
        )

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else 0.0

    @property
    def stderr(self) -> float:
        if self.count < 2:
            return 0.0
        var = max(self.sumsq / self.count - self.mean**2, 0.0)
        return float(np.sqrt(var / self.count))


class LevelSetConfig:
    """One field realization with a level h: the excursion set and its
    clusters, recomputed exactly from phi and h."""

    def __init__(self, phi: FieldSample, h: float, margin: int):
        self.phi = phi
        self.h = float(h)
        self.margin = int(margin)
        if margin < 1:
            raise GeometryError("margin must be >= 1")
        self._cs: ClusterSet | None = None

    @property
    def cluster_set(self) -> ClusterSet:
        if self._cs is None:
            self._cs = clusters_from_mask(self.phi.level_set_mask(self.h), self.phi.domain)
        return self._cs

    def is_infinite_proxy(self, label: int) -> bool:
        return self.cluster_set.min_face_distance(label) < self.margin

    def check_source(self, X: VertexSet) -> None:
        lo, hi = self.phi.domain.bounds()
        if len(X) == 0:
            raise GeometryError("source set is empty")
        rel_lo = X.coords - lo
        rel_hi = hi - 1 - X.coords
        if min(rel_lo.min(), rel_hi.min()) < self.margin:
            raise GeometryError("source set violates the domain margin")


def cluster_of(cfg: LevelSetConfig, X: VertexSet) -> tuple[VertexSet, bool]:
    """Union of clusters meeting X; finite=False iff any piece reaches the
    margin shell (the infinite-cluster proxy)."""
    cfg.check_source(X)
    union, labels = cluster_union_of(cfg.cluster_set, X)
    finite = all(not cfg.is_infinite_proxy(l) for l in labels)
    return union, finite


@dataclass
class EventAN:
    X: VertexSet
    N: int
    indicator: bool
    capacity: float
    finite: bool
    cluster_size: int


def cluster_capacity(
    S: VertexSet,
    green: FreeGreenTable,
    *,
    mc_walks: int = 20000,
    seed: int = 0,
) -> float:
    """cap(closure(S)) via the exact dense solve; Monte Carlo beyond the
    dense limit."""
    if len(S) == 0:
        return 0.0
    _, _, clo = boundary_ops(S)
    if len(clo) <= DENSE_SOLVE_LIMIT:
        return equilibrium_exact(clo, green, size_limit=DENSE_SOLVE_LIMIT).total
    diam = clo.diameter()
    est, _ = capacity_mc(clo, walks=mc_walks, escape_radius=2 * diam + 20, seed=seed)
    return est


def event_AN(cfg: LevelSetConfig, X: VertexSet, N: int, green: FreeGreenTable | None = None) -> EventAN:
    """A_N: the cluster of X is finite (margin rule) with N-1 <= cap < N."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if green is None:
        green = shared_table(cfg.phi.domain.d)
    S, finite = cluster_of(cfg, X)
    if not finite:
        return EventAN(X, N, False, float("nan"), False, len(S))
    if len(S) == 0:
        cap = 0.0
    else:
        _, _, clo = boundary_ops(S)
        if len(clo) > DENSE_SOLVE_LIMIT:
            raise SizeError(
                f"closure has {len(clo)} vertices; use capacity_mc for this cluster"
            )
        cap = equilibrium_exact(clo, green, size_limit=DENSE_SOLVE_LIMIT).total
    indicator = (N - 1) <= cap < N
    return EventAN(X, N, indicator, cap, True, len(S))


def capacity_bracket(cap: float) -> int:
    """The bracket index N with N-1 <= cap < N (empty cluster -> 1)."""
    return int(np.floor(cap)) + 1


# -- sample sweeps -------------------------------------------------------------


@dataclass
class SampleRecord:
    """Per-sample cluster statistics for the source set."""

    index: int
    size: int
    finite: bool
    capacity: float  # NaN when not finite
    bracket: int  # 0 when not finite
    connected: bool
    contains_X: bool


def sweep_cluster_stats(
    domain: Box,
    h: float,
    X: VertexSet,
    samples: int,
    seed: int,
    margin: int,
    *,
    green: FreeGreenTable | None = None,
    sampler_method: str = "dst",
    need_capacity: bool = True,
    workers: int = 1,
) -> list[SampleRecord]:
    """Deterministic sample sweep; records appear in index order regardless
    of worker count (fixed chunking, merged by chunk index)."""
    if green is None and need_capacity:
        green = shared_table(domain.d)
    sampler = make_sampler(domain, seed, sampler_method)
    records = []
    for i in range(samples):
        phi = sampler.draw(i)
        cfg = LevelSetConfig(phi, h, margin)
        S, finite = cluster_of(cfg, X)
        labels = {int(l) for l in cfg.cluster_set.labels_at(X.coords) if l > 0}
        connected = len(S) > 0 and len(labels) == 1 and X.issubset(S)
        cap = float("nan")
        bracket = 0
        if finite and need_capacity:
            cap = cluster_capacity(S, green, seed=substream_seed(seed, i))
            bracket = capacity_bracket(cap)
        records.append(
            SampleRecord(i, len(S), finite, cap, bracket, connected, X.issubset(S))
        )
    return records


def theta_hat(
    h_values,
    domain_sides,
    samples: int,
    seed: int,
    *,
    margin: int | None = None,
    d: int = 3,
) -> list[dict]:
    """Percolation-density proxy: P[center connects to the margin shell].

    The h grid is coupled: one field per (size, sample index) is thresholded
    at every h, so the curve is monotone in h exactly, sample by sample.
    """
    h_values = sorted(h_values)
    rows = []
    for side in domain_sides:
        m = margin if margin is not None else max(2, side // 5)
        domain = Box(int(side), (0,) * d)
        c = side // 2
        X = VertexSet([(c,) * d])
        sampler = make_sampler(domain, seed, "dst")
        acc = {h: EstimatorAccumulator(margin=m) for h in h_values}
        for i in range(samples):
            phi = sampler.draw(i)
            for h in h_values:
                cfg = LevelSetConfig(phi, h, m)
                _, finite = cluster_of(cfg, X)
                acc[h].add(0.0 if finite else 1.0)
        for h in h_values:
            rows.append(
                {
                    "side": int(side),
                    "h": float(h),
                    "theta": acc[h].mean,
                    "stderr": acc[h].stderr,
                    "samples": samples,
                }
            )
    return rows


def chi_kappa_tau(
    h: float,
    X: VertexSet,
    samples: int,
    seed: int,
    *,
    domain: Box,
    margin: int,
) -> dict:
    """Susceptibility, clusters-per-vertex (both empty-cluster conventions),
    truncated and plain connectivity, and the inclusion-exclusion
    reconstruction of the latter with its residual."""
    recs = sweep_cluster_stats(
        domain, h, X, samples, seed, margin, need_capacity=False
    )
    chi = EstimatorAccumulator(margin=margin)
    kappa_zero = EstimatorAccumulator(margin=margin)
    kappa_open = EstimatorAccumulator(margin=margin)
    tau_f = EstimatorAccumulator(margin=margin)
    tau = EstimatorAccumulator(margin=margin)
    sampler = make_sampler(domain, seed, "dst")
    # per-sample finiteness of each sub-source for inclusion-exclusion
    subsets = [
        VertexSet(X.coords[list(comb)])
        for r in range(1, len(X) + 1)
        for comb in itertools.combinations(range(len(X)), r)
    ]
    sub_fin = {i: EstimatorAccumulator() for i in range(len(subsets))}
    for rec in recs:
        chi.add(rec.size if rec.finite else 0.0)
        kappa_zero.add(1.0 / rec.size if (rec.finite and rec.size) else 0.0)
        if rec.contains_X and rec.size:
            kappa_open.add(1.0 / rec.size if rec.finite else 0.0)
        tau_f.add(1.0 if (rec.connected and rec.finite) else 0.0)
        tau.add(1.0 if rec.connected else 0.0)
    for i in range(samples):
        phi = sampler.draw(i)
        cfg = LevelSetConfig(phi, h, margin)
        for j, Y in enumerate(subsets):
            _, fin = cluster_of(cfg, Y)
            sub_fin[j].add(1.0 if fin else 0.0)
    # tau_X = tau^f_X + 1 - sum_{Y nonempty subset} (-1)^{|Y|+1} P[|C_Y| finite]
    incl_excl = 0.0
    for j, Y in enumerate(subsets):
        incl_excl += (-1) ** (len(Y) + 1) * sub_fin[j].mean
    tau_reconstructed = tau_f.mean + 1.0 - incl_excl
    return {
        "chi": (chi.mean, chi.stderr),
        "kappa_zero_convention": (kappa_zero.mean, kappa_zero.stderr),
        "kappa_open_conditional": (kappa_open.mean, kappa_open.stderr),
        "tau_f": (tau_f.mean, tau_f.stderr),
        "tau": (tau.mean, tau.stderr),
        "tau_reconstructed": tau_reconstructed,
        "tau_residual": abs(tau.mean - tau_reconstructed),
        "samples": samples,
    }


# -- decay curves --------------------------------------------------------------


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    denom = 1 + z**2 / n
    center = (p + z**2 / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / denom
    return float(max(0.0, center - half)), float(min(1.0, center + half))


@dataclass
class DecayCurve:
    h: float
    rows: list  # dicts: N, count, freq, wilson_lo, wilson_hi
    volume_rows: list  # dicts: N, count, freq (P[N <= |C| < inf])
    n_samples: int
    n_infinite: int
    n_overflow: int
    slope: float | None
    r_squared: float | None
    records: list = field(default_factory=list, repr=False)

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["N", "count", "freq", "wilson_lo", "wilson_hi"])
            for row in self.rows:
                w.writerow(
                    [
                        row["N"],
                        row["count"],
                        repr(row["freq"]),
                        repr(row["wilson_lo"]),
                        repr(row["wilson_hi"]),
                    ]
                )


def decay_curve(
    h: float,
    N_range,
    samples: int,
    seed: int,
    *,
    domain: Box,
    margin: int,
    X: VertexSet | None = None,
    h_star_estimate: float | None = None,
    green: FreeGreenTable | None = None,
) -> DecayCurve:
    """Per-N frequencies of the capacity-bracket events with Wilson CIs, an
    exponential fit, and the volume-decay companion table."""
    N_list = sorted(int(n) for n in N_range)
    if h_star_estimate is not None and abs(h - h_star_estimate) < 1e-9:
        warnings.warn("decay curve evaluated at the critical-height estimate")
    d = domain.d
    c = domain.side // 2
    if X is None:
        X = VertexSet([(c,) * d])
    recs = sweep_cluster_stats(domain, h, X, samples, seed, margin, green=green)
    if not N_list:
        return DecayCurve(h, [], [], samples, 0, 0, None, None, recs)
    n_inf = sum(1 for r in recs if not r.finite)
    max_N = max(N_list)
    n_overflow = sum(1 for r in recs if r.finite and r.bracket > max_N)
    rows = []
    for N in N_list:
        k = sum(1 for r in recs if r.finite and r.bracket == N)
        lo, hi = wilson_interval(k, samples)
        rows.append(
            {"N": N, "count": k, "freq": k / samples, "wilson_lo": lo, "wilson_hi": hi}
        )
    volume_rows = []
    for N in N_list:
        k = sum(1 for r in recs if r.finite and r.size >= N)
        volume_rows.append({"N": N, "count": k, "freq": k / samples})
    pos = [(r["N"], r["freq"]) for r in rows if r["count"] > 0]
    slope = r2 = None
    if len(pos) >= 2:
        xs = np.array([p[0] for p in pos], dtype=float)
        ys = np.log([p[1] for p in pos])
        coef = np.polyfit(xs, ys, 1)
        slope = float(-coef[0])
        fit = np.polyval(coef, xs)
        ss_res = float(np.sum((ys - fit) ** 2))
        ss_tot = float(np.sum((ys - ys.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayCurve(h, rows, volume_rows, samples, n_inf, n_overflow, slope, r2, recs)


def negative_level_bound_check(curve: DecayCurve, h: float) -> list[dict]:
    """For h < 0 compare each bracket frequency against the shift-argument
    bound exp(-h^2 (N-1)/2) plus 3 standard errors."""
    out = []
    for row in curve.rows:
        p = row["freq"]
        se = np.sqrt(max(p * (1 - p), 1e-12) / curve.n_samples)
        bound = float(np.exp(-0.5 * h * h * (row["N"] - 1)))
        out.append(
            {
                "N": row["N"],
                "freq": p,
                "bound": bound,
                "ok": p <= bound + 3 * se,
            }
        )
    return out


def partition_identity_check(curve: DecayCurve) -> bool:
    """sum_N P[A_N] + P[not finite] + overflow mass = 1 exactly per sample."""
    bracket_mass = sum(r["count"] for r in curve.rows)
    return bracket_mass + curve.n_infinite + curve.n_overflow == curve.n_samples


# -- critical-height scan ------------------------------------------------------


def estimate_h_star(
    d: int,
    sizes,
    samples: int,
    seed: int,
    *,
    h_grid=None,
) -> dict:
    """Crossing-probability scan: for each size, the level where the
    center-to-shell connection probability crosses 1/2 (linear
    interpolation); the estimate is the largest-size crossing with a CI from
    the binomial noise plus the spread across sizes."""
    if h_grid is None:
        h_grid = np.linspace(-0.2, 0.9, 12)
    crossings = []
    for side in sizes:
        rows = theta_hat(h_grid, [side], samples, seed, d=d)
        ps = np.array([r["theta"] for r in rows])
        hs = np.array([r["h"] for r in rows])
        idx = np.where(ps < 0.5)[0]
        if len(idx) == 0 or idx[0] == 0:
            crossings.append(float(hs[0] if len(idx) else hs[-1]))
            continue
        j = idx[0]
        h0, h1 = hs[j - 1], hs[j]
        p0, p1 = ps[j - 1], ps[j]
        crossings.append(float(h0 + (p0 - 0.5) * (h1 - h0) / max(p0 - p1, 1e-9)))
    est = crossings[-1]
    spread = float(np.std(crossings)) if len(crossings) > 1 else 0.0
    binom = 1.0 / np.sqrt(samples)
    ci = 2 * (spread + binom)
    return {"estimate": est, "ci": ci, "per_size": dict(zip([int(s) for s in sizes], crossings))}


def file_sha256(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def write_manifest(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))
