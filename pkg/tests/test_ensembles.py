import numpy as np
import pytest

from mrd.core import LN2
from mrd.ensembles import (CurvePoint, EnsembleSpec, d1bar_cc, d1bar_expurgated,
                           d1bar_iid, d1bar_superposition, optimize_q_grid,
                           sweep_rate_split)
from mrd.errors import BudgetError
from mrd.examples import (binary_curve, binary_problem, parallel_curve,
                          parallel_problem, ternary_cc, ternary_matched,
                          ternary_problem, TERNARY_Q_UXHAT)
from mrd.solvers import ConstraintSet, min_d0_multi

DELTA_HALF = 0.11002786443835955


class TestD1BarCC:
    def test_matched_binary_half_bit(self):
        p = binary_problem()
        ham = p["d1"]
        pt = d1bar_cc(p["px"], p["q"], ham, ham, 0.5)
        assert pt.d1_value == pytest.approx(DELTA_HALF, abs=1e-6)
        assert pt.ensemble == "cc"

    def test_one_sided_metric_attains_matched(self):
        # symmetric marginals make the one-sided encoder effectively matched
        p = binary_problem()
        pt = d1bar_cc(p["px"], p["q"], p["d0"], p["d1"], 0.5)
        assert pt.d1_value == pytest.approx(DELTA_HALF, abs=1e-6)

    def test_ternary_symmetric_value(self):
        tern = ternary_problem()
        for rate in (0.4, 0.8, 1.2):
            pt = d1bar_cc(tern["px"], tern["q"], tern["d0"], tern["d1"], rate)
            assert pt.d1_value == pytest.approx(ternary_cc(rate), abs=2e-5)

    def test_bracket_contains_value(self):
        p = binary_problem()
        pt = d1bar_cc(p["px"], p["q"], p["d0"], p["d1"], 0.3)
        lo, hi = pt.tie_bracket
        assert lo - 1e-9 <= pt.d1_value <= hi + 1e-9
        assert pt.d1_value == hi  # pessimistic evaluation


class TestD1BarIID:
    def test_low_rate_branch(self):
        p = binary_problem()
        for rate in (0.1, 0.25, 0.4):
            pt = d1bar_iid(p["px"], p["q"], p["d0"], p["d1"], rate)
            assert pt.d1_value == pytest.approx(binary_curve(rate, "iid"), abs=2e-5)

    def test_high_rate_pessimistic_branch(self):
        p = binary_problem()
        for rate in (0.6, 0.75, 0.9):
            pt = d1bar_iid(p["px"], p["q"], p["d0"], p["d1"], rate)
            assert pt.d1_value == pytest.approx(
                binary_curve(rate, "iid", tie="pessimistic"), abs=2e-5)

    def test_matched_never_above_cc(self):
        p = binary_problem()
        ham = p["d1"]
        for rate in (0.2, 0.5, 0.8):
            a = d1bar_iid(p["px"], p["q"], ham, ham, rate)
            b = d1bar_cc(p["px"], p["q"], ham, ham, rate)
            assert a.d1_value <= b.d1_value + 1e-8


class TestD1BarSuperposition:
    def test_single_cloud_reduces_to_cc(self):
        tern = ternary_problem()
        base = d1bar_cc(tern["px"], tern["q"], tern["d0"], tern["d1"], 0.7)
        one = d1bar_superposition(tern["px"], np.asarray(tern["q"])[None, :],
                                  tern["d0"], tern["d1"], 0.0, 0.7)
        assert one.d1_value == pytest.approx(base.d1_value, abs=1e-6)

    def test_ternary_matched_operating_point(self):
        tern = ternary_problem()
        pt = ternary_matched(0.65306810454734983)
        sup = d1bar_superposition(tern["px"], tern["q_uxhat"], tern["d0"], tern["d1"],
                                  pt.r0_bits, pt.rate_bits - pt.r0_bits)
        assert sup.d1_value == pytest.approx(0.12142857142857142, abs=1e-5)
        assert sup.rate_bits == pytest.approx(pt.rate_bits, abs=1e-12)

    def test_slack_cloud_cap_equals_single_cap_problem(self):
        # with the cloud cap beyond any achievable value, only the total
        # cap binds
        tern = ternary_problem()
        r0, r1 = 1.0, 0.2
        sup = d1bar_superposition(tern["px"], tern["q_uxhat"], tern["d0"], tern["d1"],
                                  r0, r1)
        cs = ConstraintSet(tern["px"], TERNARY_Q_UXHAT.shape, TERNARY_Q_UXHAT, True,
                           (((0, 1), (r0 + r1) * LN2),))
        single = min_d0_multi(cs, tern["d0"])
        assert sup.d0_value == pytest.approx(single.d0_star, abs=1e-7)

    def test_rate_validation(self):
        tern = ternary_problem()
        with pytest.raises(ValueError):
            d1bar_superposition(tern["px"], tern["q_uxhat"], tern["d0"], tern["d1"],
                                -0.1, 0.5)


class TestD1BarExpurgated:
    def test_parallel_matched_values(self):
        par = parallel_problem(0.3)
        for rate in (0.5, 1.0, 1.5):
            pt = d1bar_expurgated(par["px"], par["q1"], par["q2"], par["psi"],
                                  par["d0"], par["d1"], rate / 2, rate / 2)
            assert pt.d1_value == pytest.approx(
                parallel_curve(rate, 0.3, "expurgated"), abs=1e-5)

    def test_independent_baseline_strictly_worse(self):
        par = parallel_problem(0.3)
        pt = d1bar_expurgated(par["px"], par["q1"], par["q2"], par["psi"],
                              par["d0"], par["d1"], 0.5, 0.5)
        indep = parallel_curve(1.0, 0.3, "independent")
        assert indep > pt.d1_value + 1e-3

    def test_cc_on_pair_source_matches_independent_closed_form(self):
        par = parallel_problem(0.3)
        pt = d1bar_cc(par["px"], par["q"], par["d0"], par["d1"], 1.0)
        assert pt.d1_value == pytest.approx(parallel_curve(1.0, 0.3, "independent"),
                                            abs=1e-3)

    def test_psi_must_be_total(self):
        par = parallel_problem(0.3)
        bad_psi = np.array([[0, 1], [2, 9]])
        with pytest.raises(ValueError):
            d1bar_expurgated(par["px"], par["q1"], par["q2"], bad_psi,
                             par["d0"], par["d1"], 0.5, 0.5)


class TestOptimizeQGrid:
    def test_binary_matched_prefers_uniform(self):
        p = binary_problem()
        ham = p["d1"]
        best, spec = optimize_q_grid(EnsembleSpec("cc", q=[0.5, 0.5]), p["px"],
                                     ham, ham, 0.5, grid_resolution=4)
        assert np.allclose(spec.q, [0.5, 0.5])
        assert best.d1_value == pytest.approx(DELTA_HALF, abs=1e-6)

    def test_resolution_two_enumerates_three_points(self):
        p = binary_problem()
        ham = p["d1"]
        best, spec = optimize_q_grid(EnsembleSpec("iid", q=[0.5, 0.5]), p["px"],
                                     ham, ham, 0.5, grid_resolution=2)
        vals = []
        for q in ([0.0, 1.0], [0.5, 0.5], [1.0, 0.0]):
            vals.append(d1bar_iid(p["px"], q, ham, ham, 0.5).d1_value)
        assert best.d1_value == pytest.approx(min(vals), abs=1e-9)

    def test_min_over_superset_at_uniform(self):
        tern = ternary_problem()
        best, _ = optimize_q_grid(EnsembleSpec("cc", q=tern["q"]), tern["px"],
                                  tern["d0"], tern["d1"], 0.6, grid_resolution=3)
        at_uniform = d1bar_cc(tern["px"], tern["q"], tern["d0"], tern["d1"], 0.6)
        assert best.d1_value <= at_uniform.d1_value + 1e-9

    def test_explosion_guard(self):
        tern = ternary_problem()
        with pytest.raises(BudgetError):
            optimize_q_grid(EnsembleSpec("superposition", q_uxhat=tern["q_uxhat"]),
                            tern["px"], tern["d0"], tern["d1"], 0.6,
                            grid_resolution=100)
        with pytest.raises(ValueError):
            optimize_q_grid(EnsembleSpec("cc", q=tern["q"]), tern["px"],
                            tern["d0"], tern["d1"], 0.6, grid_resolution=1)


class TestSweepRateSplit:
    def test_never_worse_than_even_split(self):
        tern = ternary_problem()
        rate = 0.65306810454734983
        best, split = sweep_rate_split("superposition", tern["px"], tern["d0"],
                                       tern["d1"], rate, step_bits=rate / 10,
                                       q_uxhat=tern["q_uxhat"])
        even = d1bar_superposition(tern["px"], tern["q_uxhat"], tern["d0"],
                                   tern["d1"], rate / 2, rate / 2)
        assert best.d1_value <= even.d1_value + 1e-9
        assert abs(sum(split) - rate) <= 1e-12


class TestDataTypes:
    def test_curve_point_invariants(self):
        with pytest.raises(ValueError):
            CurvePoint(0.5, 0.1, 0.5, (0.1, 0.2), "cc")
        with pytest.raises(ValueError):
            CurvePoint(0.5, -0.1, 0.1, (0.1, 0.1), "cc")
        with pytest.raises(ValueError):
            CurvePoint(float("nan"), 0.1, 0.1, (0.1, 0.1), "cc")

    def test_ensemble_spec_validation(self):
        with pytest.raises(ValueError):
            EnsembleSpec("bogus", q=[0.5, 0.5])
        with pytest.raises(ValueError):
            EnsembleSpec("cc")
        with pytest.raises(ValueError):
            EnsembleSpec("expurgated", q1=[0.5, 0.5], q2=[0.5, 0.5],
                         psi=np.array([[0], [1]]))
        spec = EnsembleSpec("superposition", q_uxhat=TERNARY_Q_UXHAT,
                            rate_split=(0.2, 0.4))
        assert spec.rate_split == (0.2, 0.4)
