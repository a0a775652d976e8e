import numpy as np
import pytest

from gffperc.errors import GeometryError
from gffperc.extension import (
    BracketSweep,
    ComplexEstimate,
    ObservableSpec,
    F_bar_N_complex,
    bracket_sweep,
    builtin_observables,
    derivative_estimate,
    direct_real_estimate,
    fit_decay_rate,
    radius_for_bracket,
    series_eval,
    theta_S_complex,
)
from gffperc.geometry import Box, VertexSet
from gffperc.observables import LevelSetConfig, cluster_of
from gffperc.sampling import sample

DOM = Box(15, (0, 0, 0))
C = (7, 7, 7)
CENTER = VertexSet([C])
MARGIN = 4

OBS = builtin_observables()
ONE = OBS["one"]
SIZE = OBS["size"]


def _observed_shapes(h, n, seed):
    """Distinct small shapes of the center cluster, by frequency."""
    shapes = {}
    for i in range(n):
        cfg = LevelSetConfig(sample(DOM, seed=seed, index=i), h, MARGIN)
        S, fin = cluster_of(cfg, CENTER)
        if fin and 0 < len(S) <= 8:
            shapes.setdefault(S.tuples(), (S, 0))
            S0, cnt = shapes[S.tuples()]
            shapes[S.tuples()] = (S0, cnt + 1)
    return sorted(shapes.values(), key=lambda t: -t[1])


class TestObservableSpec:
    def test_growth_class_validated(self):
        with pytest.raises(ValueError):
            ObservableSpec("bad", lambda S: 1.0, "exponential")

    def test_growth_audit(self):
        shapes = [VertexSet([(0, 0, 0)]), VertexSet([(0, 0, 0), (1, 0, 0)])]
        caps = [11.6, 13.2]
        assert ONE.audit_growth(shapes, caps)
        assert SIZE.audit_growth(shapes, caps)


class TestThetaS:
    def test_weight_one_at_anchor(self):
        # z real with anchor = z: plain frequency of {C_X(z) = S}
        h = 0.5
        shapes = _observed_shapes(h, 400, seed=21)
        assert shapes, "no small shapes observed"
        S = shapes[0][0]
        est = theta_S_complex(
            S, CENTER, h, 400, 21, domain=DOM, margin=MARGIN, anchor=h
        )
        direct = shapes[0][1] / 400
        assert est.value.real == pytest.approx(direct, abs=1e-12)
        assert est.value.imag == 0.0

    def test_real_z_matches_direct_frequency(self):
        # genuine tilt: anchor below the target height, compare with the
        # direct frequency at the target on an independent stream
        h, a = 0.5, 0.35
        n = 6000
        shapes = _observed_shapes(h, 1500, seed=22)
        assert shapes
        S = shapes[0][0]
        tilted = theta_S_complex(
            S, CENTER, h, n, 23, domain=DOM, margin=MARGIN, anchor=a
        )
        target = S.tuples()
        hits = 0
        for i in range(n):
            cfg = LevelSetConfig(sample(DOM, seed=24, index=i), h, MARGIN)
            Sc, _ = cluster_of(cfg, CENTER)
            if Sc.tuples() == target:
                hits += 1
        direct = hits / n
        se_direct = np.sqrt(max(direct * (1 - direct), 1e-12) / n)
        combined = tilted.stderr + se_direct
        assert abs(tilted.value.real - direct) < 3 * combined
        assert abs(tilted.value.imag) < 3 * tilted.stderr + 1e-12

    def test_imaginary_offset_modulus_bound(self):
        # |theta_S(h+it)| <= exp(t^2 cap/2) P[C_X(h)=S] + 3 se
        h, t = 0.5, 0.6
        n = 3000
        shapes = _observed_shapes(h, 800, seed=25)
        S = shapes[0][0]
        est = theta_S_complex(
            S, CENTER, h + 1j * t, n, 26, domain=DOM, margin=MARGIN
        )
        base = theta_S_complex(S, CENTER, h, n, 26, domain=DOM, margin=MARGIN)
        cap_dom = est.meta["cap_domain"]
        bound = np.exp(0.5 * t * t * cap_dom) * base.value.real
        assert abs(est.value) <= bound + 3 * (est.stderr + base.stderr) + 1e-12

    def test_requires_X_subset(self):
        S = VertexSet([(9, 9, 9)])
        with pytest.raises(GeometryError):
            theta_S_complex(S, CENTER, 0.1, 10, 0, domain=DOM, margin=MARGIN)

    def test_conjugate_symmetry(self):
        shapes = _observed_shapes(0.5, 300, seed=27)
        S = shapes[0][0]
        z = 0.5 + 0.4j
        a = theta_S_complex(S, CENTER, z, 500, 28, domain=DOM, margin=MARGIN)
        b = theta_S_complex(S, CENTER, np.conj(z), 500, 28, domain=DOM, margin=MARGIN)
        assert b.value == pytest.approx(np.conj(a.value), abs=0)


class TestFBarN:
    def test_real_anchor_is_direct(self, green3):
        n = 800
        sweep = bracket_sweep(CENTER, 0.5, n, 30, domain=DOM, margin=MARGIN, green=green3)
        for N in (1, 2, 3):
            est = F_bar_N_complex(
                ONE, CENTER, N, 0.5, n, 30, domain=DOM, margin=MARGIN, sweep=sweep
            )
            direct = (sweep.brackets == N).mean()
            assert est.value.real == pytest.approx(direct, abs=1e-12)
            assert est.value.imag == 0.0

    def test_empty_bracket_zero(self, green3):
        est = F_bar_N_complex(
            ONE, CENTER, 999, 0.6, 50, 31, domain=DOM, margin=MARGIN, green=green3
        )
        assert est.value == 0.0 and est.stderr == 0.0

    def test_modulus_bound_imaginary(self, green3):
        n = 2500
        h = 0.45
        sweep = bracket_sweep(CENTER, h, n, 32, domain=DOM, margin=MARGIN, green=green3)
        for t in (0.2, 0.5):
            for N in (1, 2, 3, 4):
                est = F_bar_N_complex(
                    SIZE, CENTER, N, h + 1j * t, n, 32,
                    domain=DOM, margin=MARGIN, sweep=sweep,
                )
                bound = np.exp(0.5 * t * t * N) * est.meta["abs_version_at_anchor"]
                slack = 3 * (est.stderr + np.exp(0.5 * t * t * N) * est.meta["abs_version_stderr"])
                assert abs(est.value) <= bound + slack + 1e-12


class TestSeries:
    def test_partial_sum_converges_to_direct(self, green3):
        # F = 1, real height: partial sums approach 1 - theta-hat = P[finite]
        n = 1500
        h = 0.4
        res = series_eval(
            ONE, CENTER, h, 30, n, 33, domain=DOM, margin=MARGIN, green=green3
        )
        direct, d_se = direct_real_estimate(
            ONE, CENTER, h, n, 33, domain=DOM, margin=MARGIN, green=green3
        )
        assert res.meta["overflow_mass"] < 0.01
        assert abs(res.value.real - direct) < 3 * (res.stderr + d_se) + 1e-9
        assert abs(res.value.imag) < 1e-12

    def test_empty_range_zero(self, green3):
        res = series_eval(
            ONE, CENTER, 0.4, 0, 50, 34, domain=DOM, margin=MARGIN, green=green3
        )
        assert res.value == 0.0

    def test_certificate_and_geometric_tail(self, green3):
        n = 2000
        res_small = series_eval(
            ONE, CENTER, 0.5 + 0.2j, 6, n, 35, domain=DOM, margin=MARGIN, green=green3
        )
        if res_small.certificate:
            res_big = series_eval(
                ONE, CENTER, 0.5 + 0.2j, 10, n, 35,
                domain=DOM, margin=MARGIN, green=green3,
            )
            assert res_big.certificate
            assert res_big.tail_bound < res_small.tail_bound

    def test_certificate_unavailable_warns(self, green3):
        with pytest.warns(UserWarning, match="certificate"):
            series_eval(
                ONE, CENTER, 0.5 + 3.0j, 4, 400, 36,
                domain=DOM, margin=MARGIN, green=green3,
            )


class TestDerivative:
    def test_radius_schedule(self):
        assert radius_for_bracket(4) == 0.5
        assert radius_for_bracket(1) == 1.0

    def test_order_zero_rejected(self, green3):
        with pytest.raises(ValueError):
            derivative_estimate(
                ONE, CENTER, 0.4, 0, 0.2, 8, 10, 37, domain=DOM, margin=MARGIN
            )

    def test_point_count_guard(self, green3):
        with pytest.raises(ValueError):
            derivative_estimate(
                ONE, CENTER, 0.4, 2, 0.2, 8, 10, 37, domain=DOM, margin=MARGIN
            )

    def test_first_derivative_vs_finite_difference(self, green3):
        # F = 1: d/dh E[1{finite}] = -theta'; compare Cauchy estimate with a
        # coupled central difference
        h, n = 0.45, 1200
        est = derivative_estimate(
            ONE, CENTER, h, 1, 0.15, 8, n, 38,
            domain=DOM, margin=MARGIN, N_max=14, green=green3,
        )
        delta = 0.06
        hi, hi_se = direct_real_estimate(
            ONE, CENTER, h + delta, n, 38, domain=DOM, margin=MARGIN, green=green3
        )
        lo, lo_se = direct_real_estimate(
            ONE, CENTER, h - delta, n, 38, domain=DOM, margin=MARGIN, green=green3
        )
        fd = (hi - lo) / (2 * delta)
        fd_se = (hi_se + lo_se) / (2 * delta)
        assert abs(est.value.real - fd) < 3 * (est.stderr + fd_se) + 0.05
