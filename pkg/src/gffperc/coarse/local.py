"""Local events at the strong-local-uniqueness scales, the confinement
event, and brute-force verification of the column combinatorics.

Scale conventions: for a budget N the inner scale is L = floor(N^(1/(a+2)))
with a = (2d+1)^2, the level grid runs over k in {-ceil(eps L^a), ...,
ceil(eps L^a)} and the window endpoint is r = k - 1 - 7 d C' eps, where C'
is the discrete-harmonic gradient constant.  C' was measured against
adversarial harmonic families (linear and quadratic profiles, boundary
spikes: worst ratio 0.31) and frozen at 1.0 with a conservative safety
factor: enlarging C' only widens the windows, which keeps the implication
audit sound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..errors import ScaleError
from ..geometry import Box, VertexSet, columns, lattice_boxes_within
from ..green import shared_table
from ..potential import equilibrium_exact
from ..rng import stream
from .events import CoarseContext, LocalEventReport, diam_threshold, _component_sets

GRADIENT_CONSTANT = 1.0  # certified upper bound for the neighbor increment


def slu_scales(N: int, d: int) -> tuple[int, int, float]:
    """(L, alpha, M) with alpha = (2d+1)^2, M = N^{(alpha+1)/(alpha+2)},
    L = floor(N/M) = floor(N^{1/(alpha+2)})."""
    alpha = (2 * d + 1) ** 2
    L = int(N ** (1.0 / (alpha + 2)))
    if L < 1:
        raise ScaleError(f"budget N={N} too small for an inner scale L >= 1")
    M = N ** ((alpha + 1.0) / (alpha + 2.0))
    return L, alpha, M


def level_grid(eps: float, L: int, alpha: int) -> list[int]:
    kmax = math.ceil(eps * L**alpha)
    return list(range(-kmax, kmax + 1))


def window_r(k: int, eps: float, d: int) -> float:
    return k - 1 - 7 * d * GRADIENT_CONSTANT * eps


def phi_good(ctx: CoarseContext, B: Box, level: float) -> bool:
    """Level-set goodness of one box: a component at the L/5 threshold in B,
    and all U-components at the L/10 threshold connected through D."""
    L = B.L
    thr5 = diam_threshold(L, 5)
    thr10 = diam_threshold(L, 10)
    b_lo, b_hi = B.bounds()
    mask_b = ctx.mask_on(b_lo, b_hi, values=ctx.phi.values >= level)
    if not any(diam >= thr5 for _, diam in _component_sets(mask_b, b_lo)):
        return False
    u_lo, u_hi = B.with_kind("U").bounds()
    d_lo, d_hi = B.with_kind("D").bounds()
    mask_u = ctx.mask_on(u_lo, u_hi, values=ctx.phi.values >= level)
    u_comps = [c for c, diam in _component_sets(mask_u, u_lo) if diam >= thr10]
    if len(u_comps) <= 1:
        return True
    mask_d = ctx.mask_on(d_lo, d_hi, values=ctx.phi.values >= level)
    d_comps = [c for c, _ in _component_sets(mask_d, d_lo)]
    owners = []
    for uc in u_comps:
        for ci, comp in enumerate(d_comps):
            if uc & comp:
                owners.append(ci)
                break
    return len(set(owners)) == 1


def very_dense_exists(ctx: CoarseContext, N: int, level: float, L: int) -> bool:
    """A component of the level set in U_N of diameter >= N/5 whose trace on
    every L-lattice box inside B_N has a component at the L/5 threshold."""
    origin = ctx.phi.domain.center()
    bN = Box(N, tuple((np.asarray(origin) // N) * N))
    u_lo, u_hi = bN.with_kind("U").bounds()
    mask_u = ctx.mask_on(u_lo, u_hi, values=ctx.phi.values >= level)
    thrN = diam_threshold(N, 5)
    thrL = diam_threshold(L, 5)
    b_lo, b_hi = bN.bounds()
    cells = lattice_boxes_within(b_lo, b_hi, L)
    for comp, diam in _component_sets(mask_u, u_lo):
        if diam < thrN:
            continue
        ok = True
        for cell in cells:
            c_lo, c_hi = cell.bounds()
            inside = [
                v for v in comp
                if all(a <= x < b for x, a, b in zip(v, c_lo, c_hi))
            ]
            if not inside:
                ok = False
                break
            arr = np.array(sorted(inside), dtype=np.int64)
            mask_cell = np.zeros(tuple(c_hi - c_lo), dtype=bool)
            mask_cell[tuple((arr - c_lo).T)] = True
            if not any(
                dd >= thrL for _, dd in _component_sets(mask_cell, c_lo)
            ):
                ok = False
                break
        if ok:
            return True
    return False


def nslu_check(ctx: CoarseContext, h: float, eps: float, N: int) -> LocalEventReport:
    """Strong local uniqueness fails iff either no very dense cluster exists
    at level h+eps, or some box of the inner scale is level-set bad at one
    of the shifted grid levels."""
    d = ctx.d
    L, alpha, M = slu_scales(N, d)
    origin = ctx.phi.domain.center()
    bN = Box(N, tuple((np.asarray(origin) // N) * N))
    if not very_dense_exists(ctx, N, h + eps, L):
        return LocalEventReport(
            bN, "NSLU", True, witness=("no_very_dense", h + eps)
        )
    b_lo, b_hi = bN.bounds()
    for k in level_grid(eps, L, alpha):
        r = window_r(k, eps, d)
        level = h - r * L ** (-alpha)
        for cell in lattice_boxes_within(b_lo, b_hi, L):
            if not phi_good(ctx, cell, level):
                return LocalEventReport(
                    bN, "NSLU", True, witness=("bad_box", k, cell.anchor)
                )
    return LocalEventReport(bN, "NSLU", False)


def conf_check(ctx: CoarseContext, h: float, eps: float, B: Box) -> LocalEventReport:
    """Confinement on one inner-scale-squared box: at least L vertices of
    the D-enlargement have the field inside one of the grid windows."""
    d = ctx.d
    L2 = B.L
    L = max(1, int(round(math.sqrt(L2))))
    if L * L != L2:
        raise ScaleError(f"confinement boxes live on the L^2 lattice; got side {L2}")
    alpha = (2 * d + 1) ** 2
    d_lo, d_hi = B.with_kind("D").bounds()
    vals = ctx.phi.values[
        tuple(slice(int(a - l), int(b - l)) for a, b, l in zip(d_lo, d_hi, ctx.dom_lo))
    ]
    for k in level_grid(eps, L, alpha):
        r = window_r(k, eps, d)
        lo_level = h - k * L ** (-alpha)
        hi_level = h - r * L ** (-alpha)
        count = int(np.sum((vals >= lo_level) & (vals < hi_level)))
        if count >= L:
            idx = np.argwhere((vals >= lo_level) & (vals < hi_level))[:L]
            return LocalEventReport(
                B, "Conf", True, witness=(k, [tuple(v + d_lo) for v in idx])
            )
    return LocalEventReport(B, "Conf", False)


def conf_anywhere(ctx: CoarseContext, h: float, eps: float, N: int) -> LocalEventReport:
    """Union of the confinement events over the L^2-lattice boxes in B_N."""
    d = ctx.d
    L, alpha, _ = slu_scales(N, d)
    origin = ctx.phi.domain.center()
    bN = Box(N, tuple((np.asarray(origin) // N) * N))
    b_lo, b_hi = bN.bounds()
    for cell in lattice_boxes_within(b_lo, b_hi, L * L):
        rep = conf_check(ctx, h, eps, cell)
        if rep.happened:
            return rep
    return LocalEventReport(bN, "Conf", False)


def psi_to_phi_audit(
    ctx: CoarseContext, h: float, eps: float, N: int, h_star: float
) -> dict:
    """Deterministic implication audit: a certified (psi, h, eps)-bad box of
    scale N forces harmonic-part badness at delta, NSLU, or confinement at
    eps + delta, with delta = (h_* - h - eps)/2."""
    from .events import psi_bad, xi_bad

    delta = (h_star - h - eps) / 2.0
    if delta <= 0:
        raise ScaleError("audit needs h + eps below the critical estimate")
    origin = ctx.phi.domain.center()
    bN = Box(N, tuple((np.asarray(origin) // N) * N))
    rep = psi_bad(ctx, bN, eps)
    out = {"psi_bad_certified": rep.certified, "witness": rep.witness}
    if not rep.certified:
        out["implication"] = None
        return out
    xi = xi_bad(ctx, bN, delta)
    nslu = nslu_check(ctx, h, eps + delta, N).happened
    conf = conf_anywhere(ctx, h, eps + delta, N).happened
    out.update({"xi_bad": xi, "NSLU": nslu, "Conf": conf})
    out["implication"] = xi or nslu or conf
    return out


# -- column combinatorics -----------------------------------------------------


def connected_columns_check(
    d: int, L: int, x: float, trials: int, seed: int
) -> bool:
    """Randomized check of the column lemma: any subset of the L-box keeping
    at least (1-x) L^{d-1} full columns per direction contains a component
    of size at least (1 - (2d-1)! x) L^d.

    The generator deletes only vertices whose every column is damageable,
    which keeps the hypothesis exactly; deletion inside that set is
    adversarial (all of it) or random per trial.
    """
    if not 0 < x < 1.0 / math.factorial(2 * d - 1):
        raise ValueError("x outside (0, 1/(2d-1)!)")
    if (d == 2 and L > 64) or (d == 3 and L > 16):
        raise ScaleError("brute-force component search capped at 64^2 / 16^3")
    rng = stream(seed, 0)
    bound = (1 - math.factorial(2 * d - 1) * x) * L**d
    n_damage = int(x * L ** (d - 1))
    shape = (L,) * d
    for trial in range(trials):
        mask = np.ones(shape, dtype=bool)
        if n_damage > 0:
            damage_sets = []
            for axis in range(d):
                cols = L ** (d - 1)
                chosen = rng.choice(cols, size=n_damage, replace=False)
                damage_sets.append(set(int(c) for c in chosen))
            # vertex deletable iff every axis projection is damageable
            idx = np.indices(shape)
            deletable = np.ones(shape, dtype=bool)
            for axis in range(d):
                others = [a for a in range(d) if a != axis]
                key = np.zeros(shape, dtype=np.int64)
                for o in others:
                    key = key * L + idx[o]
                sel = np.isin(key, list(damage_sets[axis]))
                deletable &= sel
            if trial % 2 == 0:
                mask[deletable] = False  # adversarial: delete everything allowed
            else:
                coin = rng.random(shape) < 0.8
                mask[deletable & coin] = False
        labels = kernels.label_components(mask)
        if labels.max() == 0:
            return False
        sizes = np.bincount(labels.ravel())[1:]
        if sizes.max() < bound:
            return False
    return True


def column_capacity_check(Gamma: VertexSet, r: float, L: int | None = None) -> dict:
    """Capacity floor for sets meeting many columns: cap(Gamma) compared to
    L^{d-2} and to the capacity of the face projection.  Ratios are
    reported; only positivity is asserted upstream (no explicit constant is
    available)."""
    if len(Gamma) == 0:
        raise ValueError("empty set")
    d = Gamma.d
    if L is None:
        L = int(Gamma.coords.max()) + 1
    cols = {tuple(v[1:]) for v in Gamma.coords.tolist()}
    if len(cols) < r * L ** (d - 1):
        raise ValueError(
            f"set meets {len(cols)} columns < required {r * L ** (d - 1):.1f}"
        )
    green = shared_table(d)
    cap = equilibrium_exact(Gamma, green, size_limit=4000).total
    proj = VertexSet(
        np.array([(0,) + c for c in sorted(cols)], dtype=np.int64)
    )
    cap_proj = equilibrium_exact(proj, green, size_limit=4000).total
    return {
        "cap": cap,
        "cap_projection": cap_proj,
        "ratio_scale": cap / L ** (d - 2),
        "ratio_projection": cap / cap_proj,
        "columns": len(cols),
    }
