"""Per-box bad / very-bad event families and their admissibility audit.

A family is admissible when (i) the bad and very-bad events are disjoint on
every box, (ii) every box on the coarse boundary of the source cluster is
bad or very-bad once the cluster diameter reaches the scale, and (iii)
badness propagates: a bad box inside the coarse cluster forces the event on
each coarse neighbor that also meets the cluster.

Desk-scale conventions (all recorded in the run manifest):

* diameter thresholds "L/5", "L/10" mean the l-infinity ceiling, floored so
  boxes of scale 1-5 are not vacuously bad (min(L-1, ceil(L/denom)));
* the sub-box count M behind "dense" clusters is max(1, floor(
  L^{(d-2)/(d-1)} / ln L)), and a cluster is dense in a region when it meets
  at least 3/4 of the scale-(L/M) lattice boxes inside the region and has
  diameter >= the L/5 threshold;
* the harmonic-part split uses a configurable enlargement reach (100
  reproduces the K-kind boxes; smaller values keep the Markov split exact
  while fitting desk-scale domains).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..clusters import clusters_from_mask, cluster_union_of
from ..errors import GeometryError, ScaleError
from ..geometry import (
    Box,
    BoxFamily,
    VertexSet,
    box_family_boundary,
    boxes_hit,
    lattice_boxes_within,
    neighbor_offsets,
)
from ..observables import LevelSetConfig
from ..sampling import Decomposition, FieldSample, decompose


def diam_threshold(L: int, denom: int = 5) -> int:
    """Desk-scale reading of a "diameter at least L/denom" requirement."""
    if L <= 1:
        return 0
    return min(L - 1, max(1, math.ceil(L / denom)))


def subbox_count(L: int, d: int) -> int:
    """M = floor(L^{(d-2)/(d-1)} / ln L), clamped to >= 1."""
    if L < 2:
        return 1
    return max(1, int(L ** ((d - 2) / (d - 1)) / math.log(L)))


@dataclass
class LocalEventReport:
    box: Box
    event: str
    happened: bool
    witness: object = None  # certified occurrences carry their witness
    detail: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.happened and self.witness is not None


class CoarseContext:
    """A configuration (field + level) with the caches the event evaluators
    share: the source cluster, masks, harmonic splits per box."""

    def __init__(
        self,
        phi: FieldSample,
        h: float,
        margin: int,
        X: VertexSet | None = None,
        reach: int = 100,
    ):
        self.phi = phi
        self.h = float(h)
        self.margin = int(margin)
        self.reach = int(reach)
        self.d = phi.domain.d
        lo, hi = phi.domain.bounds()
        self.dom_lo, self.dom_hi = lo, hi
        c = phi.domain.center()
        self.X = X if X is not None else VertexSet([c])
        self.cfg = LevelSetConfig(phi, h, margin)
        union, labels = cluster_union_of(self.cfg.cluster_set, self.X)
        self.cluster = union
        self.cluster_labels = labels
        self.finite = all(not self.cfg.is_infinite_proxy(l) for l in labels)
        self.mask = phi.level_set_mask(h)
        self._decomp: dict[tuple, Decomposition] = {}
        self._xi_good: dict[tuple, bool] = {}

    def cluster_tuples(self):
        return self.cluster.tuples()

    def boxes_of_cluster(self, L: int) -> BoxFamily:
        if len(self.cluster) == 0:
            return BoxFamily([])
        return boxes_hit(self.cluster, L)

    def decomposition(self, B: Box) -> Decomposition:
        key = (B.L, B.anchor)
        if key not in self._decomp:
            self._decomp[key] = decompose(self.phi, B, reach=self.reach)
        return self._decomp[key]

    def xi_sup_on_D(self, B: Box) -> float:
        dec = self.decomposition(B)
        d_lo, d_hi = B.with_kind("D").bounds()
        if not (np.all(self.dom_lo <= d_lo) and np.all(d_hi <= self.dom_hi)):
            raise GeometryError("D-enlargement of the box leaves the domain")
        return float(np.abs(dec.harmonic_part_on(d_lo, d_hi)).max())

    def xi_good(self, B: Box, eps: float) -> bool:
        key = (B.L, B.anchor, float(eps))
        if key not in self._xi_good:
            self._xi_good[key] = self.xi_sup_on_D(B) < eps
        return self._xi_good[key]

    def mask_on(self, lo, hi, values=None) -> np.ndarray:
        """Level-set mask of phi (or of an arbitrary field array on the
        domain grid) restricted to [lo, hi)."""
        lo = np.asarray(lo)
        hi = np.asarray(hi)
        if np.any(lo < self.dom_lo) or np.any(hi > self.dom_hi):
            raise GeometryError("window leaves the domain")
        sl = tuple(
            slice(int(a - dl), int(b - dl))
            for a, b, dl in zip(lo, hi, self.dom_lo)
        )
        src = self.mask if values is None else values
        return src[sl]


def xi_bad(decomp_or_ctx, B: Box | None = None, eps: float = 0.1) -> bool:
    """(xi, eps)-badness: the harmonic part reaches eps somewhere on the
    D-enlargement (exact scan)."""
    if isinstance(decomp_or_ctx, CoarseContext):
        return not decomp_or_ctx.xi_good(B, eps)
    dec = decomp_or_ctx
    base = dec.base
    d_lo, d_hi = base.with_kind("D").bounds()
    return bool(np.abs(dec.harmonic_part_on(d_lo, d_hi)).max() >= eps)


# -- dense clusters -------------------------------------------------------------


def dense_clusters(
    mask: np.ndarray, region_lo, region_hi, L: int, d: int
) -> tuple[list[set], list[set]]:
    """Clusters of the masked set inside [region_lo, region_hi) that are
    dense: meet >= 3/4 of the scale-(L/M) lattice boxes in the region and
    have diameter >= the L/5 threshold.

    Returns (dense cluster vertex sets, all cluster vertex sets), vertices
    in absolute coordinates.
    """
    region_lo = np.asarray(region_lo)
    region_hi = np.asarray(region_hi)
    M = subbox_count(L, d)
    L0 = max(1, L // M)
    cells = lattice_boxes_within(region_lo, region_hi, L0)
    if not cells:
        raise ScaleError(f"region too small for sub-boxes of scale {L0}")
    need = 0.75 * len(cells)
    thr = diam_threshold(L, 5)
    from .. import kernels

    labels = kernels.label_components(np.ascontiguousarray(mask.astype(np.uint8)))
    nlab = labels.max()
    all_sets, dense = [], []
    for lab in range(1, nlab + 1):
        idx = np.argwhere(labels == lab)
        verts = idx + region_lo
        diam = int((verts.max(axis=0) - verts.min(axis=0)).max()) if len(verts) else 0
        vset = set(map(tuple, verts.tolist()))
        all_sets.append(vset)
        if diam < thr:
            continue
        hit = {
            tuple((np.asarray(v) // L0) * L0)
            for v in verts.tolist()
        }
        cell_anchors = {c.anchor for c in cells}
        if len(hit & cell_anchors) >= need:
            dense.append(vset)
    return dense, all_sets


# -- local psi events ------------------------------------------------------------


def witness_family(ctx: CoarseContext, B: Box, eps: float) -> list:
    """Finite stand-in for "every harmonic g with sup |g| < eps": the
    observed harmonic part, constants on an eps/8 grid, and coordinate-
    linear profiles scaled just under eps.  One violating member certifies
    badness; exhausting the family is only approximate goodness."""
    d_lo, d_hi = B.with_kind("D").bounds()
    shape = tuple(int(v) for v in (d_hi - d_lo))
    out = []
    xi = ctx.decomposition(B).harmonic_part_on(d_lo, d_hi)
    if np.abs(xi).max() < eps:
        out.append(("observed_harmonic", xi))
    for k in range(-7, 8):
        c = k * eps / 8.0
        out.append((f"const_{k}", np.full(shape, c)))
    center = (np.asarray(d_lo) + np.asarray(d_hi) - 1) / 2.0
    for axis in range(B.d):
        coords = np.arange(d_lo[axis], d_hi[axis]) - center[axis]
        prof = coords / np.abs(coords).max() * eps * (1 - 1e-9)
        shape_axis = [1] * B.d
        shape_axis[axis] = len(coords)
        for sign in (1.0, -1.0):
            out.append((f"linear_{axis}_{int(sign)}", np.broadcast_to(
                sign * prof.reshape(shape_axis), shape).copy()))
    return out


def _component_sets(mask: np.ndarray, lo) -> list[tuple[set, int]]:
    from .. import kernels

    labels = kernels.label_components(np.ascontiguousarray(mask.astype(np.uint8)))
    out = []
    for lab in range(1, labels.max() + 1):
        idx = np.argwhere(labels == lab)
        verts = idx + np.asarray(lo)
        diam = int((verts.max(axis=0) - verts.min(axis=0)).max())
        out.append((set(map(tuple, verts.tolist())), diam))
    return out


def psi_bad(
    ctx: CoarseContext, B: Box, eps: float, family=None
) -> LocalEventReport:
    """Witness search for (psi, h, eps)-badness: some harmonic |g| < eps
    breaks either the existence of a U-cluster at the L/5 threshold or the
    pairwise connection of all such clusters through D."""
    L = B.L
    thr = diam_threshold(L, 5)
    u_lo, u_hi = B.with_kind("U").bounds()
    d_lo, d_hi = B.with_kind("D").bounds()
    dec = ctx.decomposition(B)
    psi_d = dec.psi.values[
        tuple(slice(int(a - l), int(b - l)) for a, b, l in zip(d_lo, d_hi, ctx.dom_lo))
    ]
    if family is None:
        family = witness_family(ctx, B, eps)
    for name, g in family:
        level = psi_d + g >= ctx.h
        # clusters of the U-restricted set
        sl_u = tuple(
            slice(int(a - dl), int(b - dl)) for a, b, dl in zip(u_lo, u_hi, d_lo)
        )
        u_comps = [c for c, diam in _component_sets(level[sl_u], u_lo) if diam >= thr]
        if not u_comps:
            return LocalEventReport(B, "psi_bad", True, witness=name)
        if len(u_comps) > 1:
            d_comps = _component_sets(level, d_lo)
            owner = {}
            for ci, (comp, _) in enumerate(d_comps):
                for uc_i, uc in enumerate(u_comps):
                    if uc & comp:
                        owner.setdefault(uc_i, ci)
            owners = {owner.get(i) for i in range(len(u_comps))}
            if len(owners) > 1:
                return LocalEventReport(B, "psi_bad", True, witness=name)
    return LocalEventReport(B, "psi_bad", False, detail={"family": len(family)})


def psi_very_bad(
    ctx: CoarseContext, B: Box, eps: float, family=None
) -> LocalEventReport:
    """Witness search for (psi, h, eps)-very-badness: some harmonic |g| < eps
    kills a dense cluster in B or a neighbor, or disconnects a pair of dense
    clusters of B and a neighbor inside D."""
    L = B.L
    d_lo, d_hi = B.with_kind("D").bounds()
    dec = ctx.decomposition(B)
    psi_d = dec.psi.values[
        tuple(slice(int(a - l), int(b - l)) for a, b, l in zip(d_lo, d_hi, ctx.dom_lo))
    ]
    if family is None:
        family = witness_family(ctx, B, eps)
    nbrs = B.neighbors()
    for name, g in family:
        level = psi_d + g >= ctx.h
        per_box_dense = {}
        missing = False
        for Bp in [B] + nbrs:
            b_lo, b_hi = Bp.bounds()
            sl = tuple(
                slice(int(a - dl), int(b - dl)) for a, b, dl in zip(b_lo, b_hi, d_lo)
            )
            dense, _ = dense_clusters(level[sl], b_lo, b_hi, L, B.d)
            per_box_dense[Bp.anchor] = dense
            if not dense:
                missing = True
        if missing:
            return LocalEventReport(B, "psi_very_bad", True, witness=name)
        d_comps = [c for c, _ in _component_sets(level, d_lo)]

        def connected(c1: set, c2: set) -> bool:
            for comp in d_comps:
                if c1 & comp and c2 & comp:
                    return True
            return False

        for nb in nbrs:
            for c1 in per_box_dense[B.anchor]:
                for c2 in per_box_dense[nb.anchor]:
                    if not connected(c1, c2):
                        return LocalEventReport(B, "psi_very_bad", True, witness=name)
    return LocalEventReport(B, "psi_very_bad", False, detail={"family": len(family)})


# -- admissible event families ---------------------------------------------------


@dataclass
class AdmissibleEvents:
    name: str
    regime: str  # supercritical | subcritical
    params: dict
    eval_b: callable  # Box -> bool
    eval_vb: callable  # Box -> bool

    def happens(self, B: Box) -> bool:
        return self.eval_b(B) or self.eval_vb(B)


def _dense_in_box(ctx: CoarseContext, Bp: Box) -> tuple[list[set], bool]:
    lo, hi = Bp.bounds()
    sub = ctx.mask_on(lo, hi)
    dense, _ = dense_clusters(sub, lo, hi, Bp.L, ctx.d)
    return dense, bool(dense)


def supercritical_events(h: float, eps0: float, ctx: CoarseContext, h_star: float | None = None) -> AdmissibleEvents:
    """The dense-cluster family for levels below the critical height."""
    import warnings

    if h_star is not None and h >= h_star:
        warnings.warn("supercritical events requested at h >= the h_* estimate")
    cluster = ctx.cluster_tuples()
    cache: dict[tuple, tuple[bool, bool]] = {}

    def dense_outside_cluster(Bp: Box) -> tuple[bool, bool]:
        key = (Bp.L, Bp.anchor)
        if key not in cache:
            dense, has = _dense_in_box(ctx, Bp)
            outside = any(not c <= cluster for c in dense)
            cache[key] = (has, outside)
        return cache[key]

    def eval_b(B: Box) -> bool:
        # (b1) every neighbor (and B) holds a dense cluster
        for Bp in [B] + B.neighbors():
            has, _ = dense_outside_cluster(Bp)
            if not has:
                return False
        # (b2) some dense cluster of B escapes the source cluster
        _, outside = dense_outside_cluster(B)
        if not outside:
            return False
        # (b3) the harmonic part stays small
        return ctx.xi_good(B, eps0)

    def eval_vb(B: Box) -> bool:
        if not ctx.xi_good(B, eps0):
            return True  # (vb3)
        missing = False
        for Bp in [B] + B.neighbors():
            has, _ = dense_outside_cluster(Bp)
            if not has:
                missing = True
                break
        if missing:
            return True  # (vb1)
        has, outside = dense_outside_cluster(B)
        if not outside:  # all dense clusters of B inside the source cluster
            for nb in B.neighbors():
                _, nb_out = dense_outside_cluster(nb)
                if nb_out:
                    return True  # (vb2)
        return False

    return AdmissibleEvents(
        "supercritical_dense",
        "supercritical",
        {"h": h, "eps0": eps0, "reach": ctx.reach},
        eval_b,
        eval_vb,
    )


def subcritical_events(h: float, eps0: float, ctx: CoarseContext, h_star: float | None = None) -> AdmissibleEvents:
    """The long-crossing family for levels above the critical height: the
    U-enlargement holds a cluster at the L/5 threshold, split by the
    harmonic-part status."""
    import warnings

    if h_star is not None and h <= h_star:
        warnings.warn("subcritical events requested at h <= the h_* estimate")

    def crossing(B: Box) -> bool:
        u_lo, u_hi = B.with_kind("U").bounds()
        sub = ctx.mask_on(u_lo, u_hi)
        thr = diam_threshold(B.L, 5)
        return any(d >= thr for _, d in _component_sets(sub, u_lo))

    def eval_b(B: Box) -> bool:
        return crossing(B) and ctx.xi_good(B, eps0)

    def eval_vb(B: Box) -> bool:
        return crossing(B) and not ctx.xi_good(B, eps0)

    return AdmissibleEvents(
        "subcritical_crossing",
        "subcritical",
        {"h": h, "eps0": eps0, "reach": ctx.reach},
        eval_b,
        eval_vb,
    )


# -- admissibility audit ----------------------------------------------------------


@dataclass
class AuditReport:
    scale: int
    boxes_checked: int
    disjoint_ok: bool
    initiation_ok: bool
    propagation_ok: bool
    failures: list

    @property
    def ok(self) -> bool:
        return self.disjoint_ok and self.initiation_ok and self.propagation_ok


def audit_admissibility(ctx: CoarseContext, events: AdmissibleEvents, L: int) -> AuditReport:
    """Exhaustive per-box check of properties (i)-(iii) on the coarse
    cluster at one scale."""
    fam = ctx.boxes_of_cluster(L)
    anchors = {b.anchor for b in fam}
    failures = []
    disjoint_ok = initiation_ok = propagation_ok = True
    status: dict[tuple, tuple[bool, bool]] = {}
    for b in fam:
        eb, evb = events.eval_b(b), events.eval_vb(b)
        status[b.anchor] = (eb, evb)
        if eb and evb:
            disjoint_ok = False
            failures.append(("disjoint", b.anchor))
    if len(ctx.cluster) and ctx.finite and L <= ctx.cluster.diameter():
        for b in box_family_boundary(fam):
            eb, evb = status[b.anchor]
            if not (eb or evb):
                initiation_ok = False
                failures.append(("initiation", b.anchor))
    offs = neighbor_offsets(ctx.d) * L
    for b in fam:
        eb, _ = status[b.anchor]
        if not eb:
            continue
        for off in offs:
            nb = tuple(np.asarray(b.anchor) + off)
            if nb in anchors:
                eb2, evb2 = status[nb]
                if not (eb2 or evb2):
                    propagation_ok = False
                    failures.append(("propagation", b.anchor, nb))
    return AuditReport(
        L, len(fam), disjoint_ok, initiation_ok, propagation_ok, failures
    )
