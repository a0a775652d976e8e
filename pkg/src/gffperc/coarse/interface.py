"""The deterministic multi-scale interface builder and its certificates.

The builder walks the segment algorithm: pick the largest dyadic scale
whose interface is still large, trim to a two-scale family inside the
cardinality window, stop when the accumulated very-bad boxes carry capacity
N/4d (c1) or when a segment ends on a plentiful bad family at a large
enough scale (c2), descending into the bad boxes otherwise.  Thresholds
follow the published schedule (f(N) = ln^b N between segments, the final
segment at M = d 2^d C L^{d-2}); at desk scale the schedule caps the
largest evaluable dyadic scale and the trace records when the cap binds,
when counting premises fail, and every per-step quantity needed to recheck
the stop arithmetic afterwards.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..errors import GeometryError, SizeError
from ..geometry import Box, BoxFamily, VertexSet, boundary_ops, boxes_hit
from ..green import shared_table
from ..potential import capacity_mc, equilibrium_exact
from .events import AdmissibleEvents, CoarseContext

CAP_MC_WALKS = 20000


@dataclass
class Schedule:
    """Descent schedule: rho and delta from the coarse-graining theorem, the
    base scale L, the fitted box-capacity constant C, and desk-scale limits
    (largest evaluable dyadic scale, enlargement reach)."""

    rho: float
    delta: float
    L: int
    d: int
    C: float = 8.0
    reach: int = 100
    L_max: int | None = None

    def __post_init__(self):
        if self.rho <= 0 or self.delta <= 0 or self.L < 1:
            raise ValueError("schedule parameters must be positive")
        if not 0 < self.t < 1:
            raise ValueError(f"derived t = {self.t} outside (0, 1); adjust L or rho")

    @property
    def M(self) -> float:
        return self.d * 2**self.d * self.C * self.L ** (self.d - 2)

    @property
    def t(self) -> float:
        return self.L**self.rho / (2 ** (self.d + 1) * self.M)

    @property
    def b(self) -> float:
        return 3 * (self.d - 2) / self.rho

    def f(self, x: float) -> float:
        return math.log(x) ** self.b if x > 1 else 0.0

    def f_iter(self, N: float, i: int) -> float:
        out = float(N)
        for _ in range(i):
            out = self.f(out)
        return out

    def segment_count(self, N: int) -> int:
        """m = the number of f-driven segments before the final M-segment."""
        m = 0
        val = float(N)
        while self.f(val) > self.M:
            m += 1
            val = self.f(val)
        return m

    def threshold(self, N: int, segment: int) -> float:
        """Per-step cardinality target N / f^(i)(N) (the final segment uses
        M in place of the iterate)."""
        m = self.segment_count(N)
        if segment <= m:
            return N / self.f_iter(N, segment)
        return N / self.M

    def as_dict(self) -> dict:
        return {
            "rho": self.rho,
            "delta": self.delta,
            "L": self.L,
            "d": self.d,
            "C": self.C,
            "reach": self.reach,
            "L_max": self.L_max,
            "M": self.M,
            "t": self.t,
            "b": self.b,
        }


@dataclass
class TaggedBox:
    box: Box
    tag: str  # "B" | "VB"


@dataclass
class Interface:
    boxes: list  # TaggedBox
    stop_reason: str  # c1_capacity | c2_cardinality | exhausted
    trace: dict
    N: int

    def scales(self) -> list[int]:
        return sorted({tb.box.L for tb in self.boxes})

    def bad(self) -> list[Box]:
        return [tb.box for tb in self.boxes if tb.tag == "B"]

    def very_bad(self) -> list[Box]:
        return [tb.box for tb in self.boxes if tb.tag == "VB"]

    def pairwise_disjoint(self) -> bool:
        spans = [tb.box.bounds() for tb in self.boxes]
        for i in range(len(spans)):
            for j in range(i + 1, len(spans)):
                lo1, hi1 = spans[i]
                lo2, hi2 = spans[j]
                if not (np.any(hi1 <= lo2) or np.any(hi2 <= lo1)):
                    return False
        return True

    def trace_json(self) -> str:
        payload = {
            "segments": self.trace["segments"],
            "stop_reason": self.stop_reason,
            "boxes": [
                {"scale": tb.box.L, "anchor": list(tb.box.anchor), "tag": tb.tag}
                for tb in self.boxes
            ],
            "N": self.N,
            "schedule": self.trace.get("schedule"),
            "flags": self.trace.get("flags", []),
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def interface_at_scale(
    ctx: CoarseContext, events: AdmissibleEvents, L: int
) -> dict:
    """Exact evaluation of the bad/very-bad partition over the coarse
    cluster at one scale."""
    if L < 1:
        raise ValueError("scale must be >= 1")
    if len(ctx.cluster) and not ctx.finite:
        raise GeometryError("coarse graining requires the finite-cluster proxy")
    fam = ctx.boxes_of_cluster(L)
    B, VB = [], []
    for b in fam:
        if events.eval_vb(b):
            VB.append(b)
        elif events.eval_b(b):
            B.append(b)
    from ..geometry import box_family_boundary

    return {
        "scale": L,
        "all": fam,
        "B": B,
        "VB": VB,
        "I": B + VB,
        "boundary": box_family_boundary(fam) if len(fam) else BoxFamily([]),
    }


def union_capacity(boxes: list[Box], d: int) -> float:
    """Capacity of the union of boxes (exact dense solve, Monte Carlo
    fallback for big unions)."""
    if not boxes:
        return 0.0
    verts = np.unique(np.concatenate([b.vertices() for b in boxes]), axis=0)
    V = VertexSet(verts)
    green = shared_table(d)
    if len(V) <= 4000:
        return equilibrium_exact(V, green, size_limit=4000).total
    est, _ = capacity_mc(
        V, walks=CAP_MC_WALKS, escape_radius=2 * V.diameter() + 20, seed=1234
    )
    return est


def build_interface(
    ctx: CoarseContext,
    events: AdmissibleEvents,
    schedule: Schedule,
    N: int,
) -> Interface:
    """Run the segment algorithm on one configuration.

    The returned trace carries, per step: the chosen exponent k, the two
    scales, the candidate and trimmed interface sizes, the capacity and
    cardinality check values.  Identical inputs produce identical output.
    """
    if not ctx.finite:
        raise GeometryError("the source cluster violates the finite proxy")
    if len(ctx.cluster) == 0:
        return Interface([], "exhausted", {"segments": [], "flags": ["empty_cluster"],
                                           "schedule": schedule.as_dict()}, N)
    diam = ctx.cluster.diameter()
    k_diam = int(math.floor(math.log2(diam))) if diam >= 1 else 0
    L_cap = schedule.L_max
    k_cap = k_diam
    flags = []
    if L_cap is not None:
        k_allowed = int(math.floor(math.log2(L_cap))) - 1  # L_{i,j} = 2^{k+1} <= L_max
        if k_allowed < k_diam:
            flags.append("scale_capped")
        k_cap = min(k_diam, k_allowed)
    if k_cap < 0:
        raise GeometryError(
            "no evaluable dyadic scale: enlarge the domain or lower the reach"
        )

    level_cache: dict[int, dict] = {}

    def level(L: int) -> dict:
        if L not in level_cache:
            level_cache[L] = interface_at_scale(ctx, events, L)
        return level_cache[L]

    def restricted(L: int, parents: list[Box] | None) -> list[Box]:
        """Boxes of I(L) lying inside some parent box."""
        boxes = level(L)["I"]
        if parents is None:
            return boxes
        spans = [p.bounds() for p in parents]
        out = []
        for b in boxes:
            lo, hi = b.bounds()
            if any(np.all(plo <= lo) and np.all(hi <= phi) for plo, phi in spans):
                out.append(b)
        return out

    segments = []
    all_vb: list[Box] = []
    parents: list[Box] | None = None
    segment = 1
    k_prev = k_cap + 1
    m = schedule.segment_count(N)
    stop_reason = "exhausted"
    final_boxes: list[TaggedBox] = []

    while True:
        threshold = schedule.threshold(N, min(segment, m + 1))
        steps = []
        seg_bad: list[Box] = []
        while True:
            # choose the largest usable exponent with enough interface boxes
            k_sel = None
            for k in range(min(k_cap, k_prev - 1), -1, -1):
                if len(restricted(2**k, parents)) >= threshold:
                    k_sel = k
                    break
            if k_sel is None:
                if not segments and not steps:
                    raise SizeError(
                        "no dyadic scale carries the required interface count "
                        f"(threshold {threshold:.3g}); the counting premise "
                        "fails at this configuration"
                    )
                stop_reason = "exhausted"
                flags.append("no_scale_at_step")
                segments.append({"threshold": threshold, "steps": steps})
                final_boxes = [TaggedBox(b, "VB") for b in all_vb]
                return _finish(ctx, segments, stop_reason, final_boxes, flags, schedule, N)
            # k_cap already guarantees L_hi = 2^(k+1) is evaluable
            L_hi = 2 ** (k_sel + 1)
            fine = restricted(2**k_sel, parents)
            coarse = restricted(L_hi, parents)
            # the construction keeps the whole coarse level (separation
            # certificates depend on it) and adds fine boxes up to the
            # window floor; when the level itself already exceeds the
            # window, the premise |I(2^{k+1})| < N/f (automatic at the
            # theorem's scales) has failed and is flagged, never trimmed
            lo_target = threshold / 2**schedule.d
            picked: list[Box] = sorted(coarse, key=lambda b: b.anchor)
            if len(picked) >= threshold:
                flags.append("cardinality_window_exceeded")
            spans = [p.bounds() for p in picked]

            def disjoint_from_picked(b: Box) -> bool:
                lo, hi = b.bounds()
                return all(
                    np.any(hi <= plo) or np.any(phi <= lo) for plo, phi in spans
                )

            for b in sorted(fine, key=lambda b: b.anchor):
                if len(picked) >= lo_target:
                    break
                if disjoint_from_picked(b):
                    picked.append(b)
                    spans.append(b.bounds())
            iprime = picked
            vb_here = [b for b in iprime if events.eval_vb(b)]
            bad_here = [b for b in iprime if not events.eval_vb(b) and events.eval_b(b)]
            all_vb.extend(vb_here)
            cap_vb = union_capacity(all_vb, ctx.d)
            step = {
                "segment": segment,
                "k": k_sel,
                "L_low": 2**k_sel,
                "L_high": L_hi,
                "candidates_fine": len(fine),
                "candidates_coarse": len(coarse),
                "interface_size": len(iprime),
                "threshold": threshold,
                "vb_count": len(vb_here),
                "bad_count": len(bad_here),
                "cap_vb_cumulative": cap_vb,
                "c1_target": N / (4 * ctx.d),
                "vb_boxes": [[b.L, list(b.anchor)] for b in vb_here],
                "bad_boxes": [[b.L, list(b.anchor)] for b in bad_here],
            }
            steps.append(step)
            if cap_vb >= N / (4 * ctx.d):
                stop_reason = "c1_capacity"
                segments.append({"threshold": threshold, "steps": steps})
                final_boxes = [TaggedBox(b, "VB") for b in all_vb]
                return _finish(ctx, segments, stop_reason, final_boxes, flags, schedule, N)
            if len(bad_here) >= lo_target:
                seg_bad = bad_here
                step["segment_end"] = True
                break
            # descend into the bad boxes of this step
            parents = bad_here
            k_prev = k_sel
            if not parents:
                stop_reason = "exhausted"
                flags.append("no_bad_boxes_to_descend")
                segments.append({"threshold": threshold, "steps": steps})
                final_boxes = [TaggedBox(b, "VB") for b in all_vb]
                return _finish(ctx, segments, stop_reason, final_boxes, flags, schedule, N)
        segments.append({"threshold": threshold, "steps": steps})
        # segment ended on a plentiful bad family: stop or move on
        L_low, L_high = steps[-1]["L_low"], steps[-1]["L_high"]
        stop_scale = (
            segment > m
            or L_high >= schedule.f_iter(N, segment) ** (1.0 / schedule.rho)
        )
        if stop_scale:
            low = [b for b in seg_bad if b.L == L_low]
            high = [b for b in seg_bad if b.L == L_high]
            chosen = high if len(high) >= len(low) else low
            stop_reason = "c2_cardinality"
            final_boxes = [TaggedBox(b, "B") for b in chosen]
            return _finish(ctx, segments, stop_reason, final_boxes, flags, schedule, N)
        parents = seg_bad
        k_prev = int(math.log2(steps[-1]["L_low"])) + 1
        segment += 1


def _finish(ctx, segments, stop_reason, boxes, flags, schedule, N) -> Interface:
    trace = {
        "segments": segments,
        "flags": flags,
        "schedule": schedule.as_dict(),
        "c2_t": schedule.t,
    }
    iface = Interface(boxes, stop_reason, trace, N)
    if stop_reason == "c2_cardinality":
        L1 = min(b.box.L for b in boxes) if boxes else 0
        trace["c2_value"] = len(boxes) * L1**schedule.rho
        trace["c2_target"] = schedule.t * N
    if stop_reason == "c1_capacity":
        trace["c1_value"] = union_capacity([tb.box for tb in boxes], ctx.d)
        trace["c1_target"] = N / (4 * ctx.d)
    return iface


# -- separation certificates ------------------------------------------------------


def separating_check(
    ctx: CoarseContext,
    L: int,
    events: AdmissibleEvents,
    *,
    report_capacity: bool = True,
) -> dict:
    """BFS certificate that X = VB(L) union (inner cluster boundary inside
    the bad boxes) separates the source cluster from the margin shell, plus
    the numerical capacity comparison (reported, not asserted)."""
    if len(ctx.cluster) == 0:
        raise GeometryError("separating check needs a nonempty cluster")
    if not ctx.finite:
        raise GeometryError("separating check needs the finite-cluster proxy")
    lv = interface_at_scale(ctx, events, L)
    inner, _, _ = boundary_ops(ctx.cluster)
    blocked = set()
    for b in lv["VB"]:
        blocked.update(map(tuple, b.vertices().tolist()))
    bad_spans = [b.bounds() for b in lv["B"]]
    for v in inner:
        pv = np.asarray(v)
        if any(np.all(lo <= pv) and np.all(pv < hi) for lo, hi in bad_spans):
            blocked.add(v)
    lo, hi = ctx.dom_lo, ctx.dom_hi
    shell_dist = ctx.margin
    start = [v for v in ctx.cluster if v not in blocked]
    seen = set(start)
    queue = deque(start)
    separated = True
    offs = [tuple(o) for o in np.vstack([np.eye(ctx.d, dtype=int), -np.eye(ctx.d, dtype=int)])]
    while queue:
        cur = queue.popleft()
        arr = np.asarray(cur)
        if (arr - lo).min() < shell_dist or (hi - 1 - arr).min() < shell_dist:
            separated = False
            break
        for off in offs:
            nxt = tuple(int(a + o) for a, o in zip(cur, off))
            npt = np.asarray(nxt)
            if np.any(npt < lo) or np.any(npt >= hi):
                continue
            if nxt in blocked or nxt in seen:
                continue
            seen.add(nxt)
            queue.append(nxt)
    out = {"separated": separated, "blocked_size": len(blocked), "scale": L}
    if report_capacity and blocked:
        V = VertexSet(np.array(sorted(blocked), dtype=np.int64))
        if len(V) <= 4000:
            out["cap_X"] = equilibrium_exact(V, shared_table(ctx.d), size_limit=4000).total
        else:
            out["cap_X"], _ = capacity_mc(
                V, walks=CAP_MC_WALKS, escape_radius=2 * V.diameter() + 20, seed=99
            )
        cl = ctx.cluster
        if len(cl) <= 4000:
            out["cap_cluster"] = equilibrium_exact(cl, shared_table(ctx.d), size_limit=4000).total
    return out


def multi_cutset_audit(
    ctx: CoarseContext, iface: Interface, events: AdmissibleEvents
) -> list[dict]:
    """Separation certificates along a built interface: at each recorded
    step, the accumulated (primed) very-bad boxes plus the cluster boundary
    inside that step's (primed) bad boxes must separate the cluster from
    the margin shell.  Box sets are replayed from the trace."""
    out = []
    inner, _, _ = boundary_ops(ctx.cluster)
    accumulated_vb: list[Box] = []
    for seg in iface.trace["segments"]:
        for step in seg["steps"]:
            vb_here = [Box(L, tuple(a)) for L, a in step["vb_boxes"]]
            bad_here = [Box(L, tuple(a)) for L, a in step["bad_boxes"]]
            accumulated_vb = list({
                (b.L, b.anchor): b for b in accumulated_vb + vb_here
            }.values())
            blocked = set()
            for b in accumulated_vb:
                blocked.update(map(tuple, b.vertices().tolist()))
            spans = [b.bounds() for b in bad_here]
            for v in inner:
                pv = np.asarray(v)
                if any(np.all(lo <= pv) and np.all(pv < hi) for lo, hi in spans):
                    blocked.add(v)
            sep = _bfs_separated(ctx, blocked)
            out.append(
                {"segment": step["segment"], "k": step["k"], "separated": sep}
            )
    return out


def _bfs_separated(ctx: CoarseContext, blocked: set) -> bool:
    lo, hi = ctx.dom_lo, ctx.dom_hi
    start = [v for v in ctx.cluster if v not in blocked]
    seen = set(start)
    queue = deque(start)
    offs = [tuple(o) for o in np.vstack([np.eye(ctx.d, dtype=int), -np.eye(ctx.d, dtype=int)])]
    while queue:
        cur = queue.popleft()
        arr = np.asarray(cur)
        if (arr - lo).min() < ctx.margin or (hi - 1 - arr).min() < ctx.margin:
            return False
        for off in offs:
            nxt = tuple(int(a + o) for a, o in zip(cur, off))
            npt = np.asarray(nxt)
            if np.any(npt < lo) or np.any(npt >= hi):
                continue
            if nxt in blocked or nxt in seen:
                continue
            seen.add(nxt)
            queue.append(nxt)
    return True
