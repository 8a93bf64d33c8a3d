import math

import numpy as np
import pytest

from mrd.core import binary_entropy
from mrd.examples import (DEFAULT_GAUSSIAN_LAMBDAS, binary_curve, gaussian_curve,
                          gaussian_d0_from_rate, gaussian_matched_points,
                          gaussian_rate_nats, h2_inv_lower, parallel_curve,
                          ternary_cc, ternary_iu, ternary_matched)

LN2 = math.log(2.0)


class TestH2Inversion:
    def test_lower_root_selected(self):
        d = h2_inv_lower(0.5)
        assert d == pytest.approx(0.11002786443835955, abs=1e-12)
        assert d < 0.5
        assert h2_inv_lower(0.0) == 0.0
        assert h2_inv_lower(1.0) == 0.5

    def test_domain(self):
        with pytest.raises(ValueError):
            h2_inv_lower(1.5)


class TestBinaryCurve:
    def test_full_rate_matched_is_zero(self):
        assert binary_curve(1.0, "matched") == 0.0

    def test_quarter_bit_iid_both_ties(self):
        want = 0.30501393221917978
        assert binary_curve(0.25, "iid", tie="pessimistic") == pytest.approx(want, abs=1e-12)
        assert binary_curve(0.25, "iid", tie="uniform") == pytest.approx(want, abs=1e-12)

    def test_three_quarter_bit_branches(self):
        assert binary_curve(0.75, "iid", tie="uniform") == 0.25
        assert binary_curve(0.75, "iid", tie="pessimistic") == pytest.approx(
            0.44498606778082022, abs=1e-12)

    def test_composition_constrained_equals_matched(self):
        for rate in np.linspace(0.05, 1.0, 9):
            assert binary_curve(rate, "cc") == binary_curve(rate, "matched")

    def test_half_bit_transition(self):
        # both one-sided limits sit at 1/4, then the pessimistic branch
        # climbs past 0.4
        left = binary_curve(0.5 - 1e-9, "iid", tie="pessimistic")
        right = binary_curve(0.5 + 1e-9, "iid", tie="pessimistic")
        assert left == pytest.approx(0.25, abs=1e-3)
        assert right == pytest.approx(0.25, abs=1e-3)
        assert binary_curve(0.75, "iid", tie="pessimistic") > 0.4

    def test_domain_and_arguments(self):
        with pytest.raises(ValueError):
            binary_curve(1.2, "iid")
        with pytest.raises(ValueError):
            binary_curve(0.5, "bogus")
        with pytest.raises(ValueError):
            binary_curve(0.5, "iid", tie="bogus")


class TestParallelCurve:
    def test_full_rate_is_zero(self):
        for ens in ("independent", "expurgated", "matched"):
            assert parallel_curve(2.0, 0.3, ens) == pytest.approx(0.0, abs=1e-9)

    def test_expurgated_one_bit(self):
        assert parallel_curve(1.0, 0.3, "expurgated") == pytest.approx(
            0.11002786443835955, abs=1e-12)

    def test_matched_coincides_with_expurgated(self):
        for rate in (0.5, 1.0, 1.5):
            assert parallel_curve(rate, 0.3, "matched") == parallel_curve(
                rate, 0.3, "expurgated")

    def test_independent_one_bit_value(self):
        # numerical minimization of the weighted two-branch trade-off
        val = parallel_curve(1.0, 0.3, "independent")
        assert val == pytest.approx(0.126831842272, abs=1e-8)
        assert val > parallel_curve(1.0, 0.3, "expurgated")

    def test_balanced_weight_recovers_matched(self):
        # equal branch weights make the independent optimum symmetric
        assert parallel_curve(1.0, 0.5, "independent") == pytest.approx(
            0.11002786443835955, abs=1e-7)

    def test_domain(self):
        with pytest.raises(ValueError):
            parallel_curve(2.5, 0.3)
        with pytest.raises(ValueError):
            parallel_curve(1.0, 1.5)


class TestTernary:
    def test_operating_point_at_reference_rate(self):
        pt = ternary_matched(0.65306810454734983)
        assert pt.p02 == pytest.approx(0.05, abs=1e-10)
        assert pt.p01 == pytest.approx(0.010714285714285714, abs=1e-10)
        assert pt.d1 == pytest.approx(0.12142857142857143, abs=1e-10)
        assert pt.r0_bits == pytest.approx(0.21797199783332503, abs=1e-10)

    def test_zero_rate_limit(self):
        pt = ternary_matched(1e-6)
        assert pt.p01 == pytest.approx(1 / 9, abs=1e-3)
        assert pt.p02 == pytest.approx(1 / 9, abs=1e-3)
        assert pt.d1 == pytest.approx(4 / 9, abs=5e-3)

    def test_p02_never_exceeds_one_ninth(self):
        for rate in np.linspace(0.05, 1.5, 12):
            assert ternary_matched(rate).p02 <= 1 / 9 + 1e-9

    def test_stationarity_relation(self):
        pt = ternary_matched(0.8)
        assert pt.p01 == pytest.approx(pt.p02 ** 2 / (1 / 3 - 2 * pt.p02), abs=1e-12)

    def test_domain(self):
        with pytest.raises(ValueError):
            ternary_matched(0.0)
        with pytest.raises(ValueError):
            ternary_matched(math.log2(3) + 0.01)

    def test_cloud_information_values(self):
        assert ternary_iu(0.0) == pytest.approx(0.91829583405448951, abs=1e-12)
        assert ternary_iu(1 / 6) == pytest.approx(0.25162916738782285, abs=1e-12)
        assert ternary_iu(0.05) == pytest.approx(0.21797199783332503, abs=1e-12)
        # the cloud layer decouples from the source at p02 = 1/9: the
        # joint is a product there, so the information vanishes
        assert abs(ternary_iu(1 / 9)) <= 1e-12

    def test_cloud_information_decreasing_up_to_one_ninth(self):
        grid = np.linspace(0.0, 1 / 9, 24)
        vals = [ternary_iu(p) for p in grid]
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_cloud_information_domain(self):
        with pytest.raises(ValueError):
            ternary_iu(0.2)

    def test_unstructured_curve_decreasing(self):
        vals = [ternary_cc(r) for r in (0.2, 0.6, 1.0, 1.4)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestGaussian:
    def test_reference_point_at_unit_tilt(self):
        pt = gaussian_curve([-1.0])[0]
        assert pt.rho == pytest.approx(2 / 3, abs=1e-12)
        assert pt.d0_value == pytest.approx(0.51639777949432225, abs=1e-9)
        assert pt.d1_value == pytest.approx(0.26772047280123001, abs=1e-9)
        assert pt.rate_bits == pytest.approx(0.53752472798430525, abs=1e-9)

    def test_weak_tilt_limit(self):
        pt = gaussian_curve([-1e-8])[0]
        assert abs(pt.rho) < 1e-7
        assert pt.d0_value == pytest.approx(2.0, abs=1e-6)
        assert pt.rate_bits == pytest.approx(0.0, abs=1e-6)

    def test_matched_column_definitional(self):
        curve = gaussian_curve([-0.5, -2.0, -10.0])
        for ref in gaussian_matched_points(curve):
            assert ref.rate_bits == pytest.approx(1.0 - binary_entropy(ref.d1_value),
                                                  abs=1e-14)
            assert ref.d0_value == ref.d1_value

    def test_rate_diverges_at_small_distortion(self):
        curve = gaussian_curve(DEFAULT_GAUSSIAN_LAMBDAS)
        assert curve[-1].rate_bits > 4.0
        matched = gaussian_matched_points(curve)
        assert max(pt.rate_bits for pt in matched) < 2.0

    def test_sign_distortion_decreasing_in_tilt_strength(self):
        curve = gaussian_curve(DEFAULT_GAUSSIAN_LAMBDAS)
        d1s = [pt.d1_value for pt in curve]
        assert all(a > b for a, b in zip(d1s, d1s[1:]))

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            gaussian_curve([0.0])
        with pytest.raises(ValueError):
            gaussian_curve([-1.0], sigma2=0.0)

    def test_rate_expression_round_trip(self):
        for rate in (0.1, 0.5, 1.2):
            d0 = gaussian_d0_from_rate(rate)
            assert gaussian_rate_nats(d0) == pytest.approx(rate, abs=1e-8)
        with pytest.raises(ValueError):
            gaussian_rate_nats(2.5)
