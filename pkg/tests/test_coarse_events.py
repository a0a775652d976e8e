import numpy as np
import pytest

from gffperc.coarse import (
    CoarseContext,
    audit_admissibility,
    dense_clusters,
    diam_threshold,
    psi_bad,
    psi_very_bad,
    subcritical_events,
    supercritical_events,
    xi_bad,
)
from gffperc.coarse.events import subbox_count, witness_family
from gffperc.errors import GeometryError
from gffperc.geometry import Box, VertexSet
from gffperc.sampling import FieldSample, sample

SIDE, MARGIN, REACH = 61, 24, 5
DOM = Box(SIDE, (0, 0, 0))
H_STAR = 0.33


def _ctx(h, seed=77, index=0, values=None):
    phi = sample(DOM, seed=seed, index=index)
    if values is not None:
        phi = FieldSample(DOM, values, seed, index, "manual")
    return CoarseContext(phi, h, MARGIN, reach=REACH)


def _const_field(c):
    return np.full((SIDE, SIDE, SIDE), float(c))


class TestThresholds:
    def test_diam_threshold_floors(self):
        assert diam_threshold(1) == 0
        assert diam_threshold(2) == 1
        assert diam_threshold(5) == 1
        assert diam_threshold(10) == 2
        assert diam_threshold(100) == 20

    def test_subbox_count(self):
        assert subbox_count(1, 3) == 1
        assert subbox_count(4, 3) == 1
        assert subbox_count(128, 3) == 2


class TestXiBad:
    def test_constant_field_harmonic_part_small(self):
        # constant fields have xi == const inside the enlargement
        ctx = _ctx(0.0, values=_const_field(0.05))
        B = Box(2, (30, 30, 30))
        assert not xi_bad(ctx, B, eps=0.1)
        assert xi_bad(ctx, B, eps=0.01)

    def test_eps_zero_always_bad(self):
        ctx = _ctx(0.2, index=3)
        B = Box(2, (30, 30, 30))
        assert xi_bad(ctx, B, eps=0.0)

    def test_monotone_in_eps(self):
        ctx = _ctx(0.2, index=4)
        B = Box(1, (30, 30, 30))
        sup = ctx.xi_sup_on_D(B)
        assert xi_bad(ctx, B, eps=sup * 0.99)
        assert not xi_bad(ctx, B, eps=sup * 1.01)

    def test_badness_probability_decreasing_in_scale(self):
        # Monte Carlo trend: bigger boxes are less often (xi, eps)-bad at
        # fixed eps (harmonic deviations cost capacity ~ L^{d-2})
        eps = 0.45
        rates = []
        for L in (1, 3):
            bad = 0
            n = 40
            for i in range(n):
                ctx = _ctx(0.0, seed=909, index=i)
                anchor = (30 // L) * L
                if xi_bad(ctx, Box(L, (anchor,) * 3), eps=eps):
                    bad += 1
            rates.append(bad / n)
        assert rates[1] <= rates[0] + 0.15


class TestDenseClusters:
    def test_full_box_dense(self):
        mask = np.ones((4, 4, 4), bool)
        dense, all_sets = dense_clusters(mask, (0, 0, 0), (4, 4, 4), 4, 3)
        assert len(dense) == 1 and len(all_sets) == 1

    def test_empty_not_dense(self):
        mask = np.zeros((4, 4, 4), bool)
        dense, all_sets = dense_clusters(mask, (0, 0, 0), (4, 4, 4), 4, 3)
        assert dense == [] and all_sets == []

    def test_small_fragment_not_dense(self):
        mask = np.zeros((8, 8, 8), bool)
        mask[0, 0, 0] = True
        dense, all_sets = dense_clusters(mask, (0, 0, 0), (8, 8, 8), 8, 3)
        assert len(all_sets) == 1 and dense == []


class TestPsiEvents:
    def test_low_level_approximately_good(self):
        ctx = _ctx(-1e6, index=5)
        B = Box(2, (30, 30, 30))
        rep = psi_bad(ctx, B, eps=0.2)
        assert not rep.happened

    def test_high_level_certified_bad(self):
        ctx = _ctx(1e6, index=6)
        B = Box(2, (30, 30, 30))
        rep = psi_bad(ctx, B, eps=0.2)
        assert rep.certified

    def test_witness_monotone_in_eps(self):
        # a certified witness at eps stays valid at any eps' > eps because
        # the family only grows and the same member still violates
        ctx = _ctx(0.9, index=7)
        B = Box(2, (30, 30, 30))
        rep = psi_bad(ctx, B, eps=0.15)
        if rep.certified:
            fam = witness_family(ctx, B, 0.3)
            names = [n for n, _ in fam]
            base_names = [n for n, _ in witness_family(ctx, B, 0.15)]
            assert set(base_names) <= set(names) | {"observed_harmonic"}
            rep2 = psi_bad(ctx, B, eps=0.3)
            assert rep2.certified

    def test_very_bad_extremes(self):
        B = Box(2, (30, 30, 30))
        low = _ctx(-1e6, index=8)
        assert not psi_very_bad(low, B, eps=0.2).happened
        high = _ctx(1e6, index=9)
        assert psi_very_bad(high, B, eps=0.2).certified

    def test_very_bad_implied_by_events(self):
        # certified E_vb with a (xi, eps0)-good box forces psi-very-badness
        # on the same configuration
        eps0 = 0.35
        hits = 0
        for i in range(30):
            ctx = _ctx(0.28, seed=555, index=i)
            if len(ctx.cluster) == 0 or not ctx.finite:
                continue
            ev = supercritical_events(0.28, eps0, ctx, h_star=H_STAR)
            for b in ctx.boxes_of_cluster(2):
                if ev.eval_vb(b) and ctx.xi_good(b, eps0):
                    rep = psi_very_bad(ctx, b, eps=eps0)
                    assert rep.happened, f"config {i}, box {b.anchor}"
                    hits += 1
        assert hits >= 1


class TestAdmissibility:
    @pytest.mark.parametrize("eps0", [0.05, 0.35])
    def test_supercritical_audit(self, eps0):
        checked = 0
        for i in range(40):
            ctx = _ctx(0.28, seed=101, index=i)
            if len(ctx.cluster) == 0 or not ctx.finite:
                continue
            ev = supercritical_events(0.28, eps0, ctx, h_star=H_STAR)
            for L in (1, 2):
                rep = audit_admissibility(ctx, ev, L)
                assert rep.ok, rep.failures
                checked += 1
        assert checked >= 6

    def test_subcritical_audit(self):
        checked = 0
        for i in range(120):
            ctx = _ctx(0.45, seed=202, index=i)
            if len(ctx.cluster) == 0 or not ctx.finite:
                continue
            ev = subcritical_events(0.45, 0.05, ctx, h_star=H_STAR)
            for L in (1, 2):
                rep = audit_admissibility(ctx, ev, L)
                assert rep.ok, rep.failures
                checked += 1
        assert checked >= 6

    def test_regime_warning(self):
        ctx = _ctx(0.5, index=10)
        with pytest.warns(UserWarning):
            supercritical_events(0.5, 0.1, ctx, h_star=H_STAR)
        with pytest.warns(UserWarning):
            subcritical_events(0.2, 0.1, ctx, h_star=H_STAR)
