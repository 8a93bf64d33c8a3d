import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrd._util import derive_rng
from mrd.ensembles import EnsembleSpec
from mrd.errors import BudgetError
from mrd.examples import binary_problem, parallel_problem, ternary_problem
from mrd.general_dual import gaussian_sign_model
from mrd.montecarlo import (SimConfig, check_type_coverage, codebook_size,
                            draw_codebook, encode, round_type, run_trials,
                            run_trials_continuous)

HAMMING = np.array([[0.0, 1.0], [1.0, 0.0]])
ONE_SIDED = np.array([[0.0, 1.0], [0.0, 0.0]])


class TestRoundType:
    @given(st.integers(min_value=2, max_value=4), st.integers(min_value=8, max_value=64),
           st.integers(min_value=0, max_value=2 ** 31 - 1))
    @settings(max_examples=60)
    def test_sup_norm_within_one_over_n(self, k, n, seed):
        rng = np.random.default_rng(seed)
        q = rng.dirichlet(np.ones(k)) * 0.8 + 0.2 / k
        q /= q.sum()
        counts = round_type(q, n)
        assert counts.sum() == n
        assert np.abs(counts / n - q).max() <= 1.0 / n + 1e-12
        assert np.all(counts[q > 0] >= 1)

    def test_error_names_smallest_valid_n(self):
        with pytest.raises(ValueError, match="smallest valid n is 3"):
            round_type([1 / 3, 1 / 3, 1 / 3], 2)

    def test_zero_mass_symbols_get_nothing(self):
        counts = round_type([0.5, 0.5, 0.0], 10)
        assert counts.tolist() == [5, 5, 0]


class TestCodebookSize:
    def test_small_exact(self):
        assert codebook_size(0.5, 8) == 16
        assert codebook_size(0.0, 8) == 1
        assert codebook_size(0.3, 10) == int(math.floor(2 ** 3.0))

    def test_huge_is_none(self):
        assert codebook_size(0.5, 400) is None


class TestDrawCodebook:
    def test_cc_compositions_exact(self):
        spec = EnsembleSpec("cc", q=[0.5, 0.5])
        words, info = draw_codebook(spec, 4, 1.0, derive_rng(3, 1, 0))
        assert words.shape == (16, 4)
        assert np.all(words.sum(axis=1) == 2)  # two ones in every codeword

    def test_single_codeword_at_tiny_rate(self):
        spec = EnsembleSpec("iid", q=[0.5, 0.5])
        words, info = draw_codebook(spec, 10, 0.05, derive_rng(3, 1, 0))
        assert words.shape == (1, 10)

    def test_superposition_satellite_compositions(self):
        tern = ternary_problem()
        spec = EnsembleSpec("superposition", q_uxhat=tern["q_uxhat"],
                            rate_split=(0.25, 0.25))
        n = 12
        words, info = draw_codebook(spec, n, spec.rate_split, derive_rng(5, 1, 0))
        joint = info["joint_composition"]
        m1 = info["M1"]
        centers = info["centers"]
        for i, center in enumerate(centers):
            for j in range(m1):
                w = words[i * m1 + j]
                for u in range(joint.shape[0]):
                    pos = center == u
                    got = np.bincount(w[pos], minlength=joint.shape[1])
                    assert np.array_equal(got, joint[u])

    def test_expurgation_predicate_exact(self):
        par = parallel_problem(0.3)
        spec = EnsembleSpec("expurgated", q1=par["q1"], q2=par["q2"], psi=par["psi"],
                            rate_split=(0.4, 0.4))
        n = 16
        delta = 0.1
        words, info = draw_codebook(spec, n, spec.rate_split, derive_rng(9, 1, 0),
                                    delta=delta)
        b1, b2 = info["book1"], info["book2"]
        kept = {tuple(p) for p in info["kept_pairs"]}
        ref = np.outer(par["q1"], par["q2"])
        for i in range(b1.shape[0]):
            for j in range(b2.shape[0]):
                emp = np.zeros((2, 2))
                for a in range(2):
                    for b in range(2):
                        emp[a, b] = np.mean((b1[i] == a) & (b2[j] == b))
                inside = np.abs(emp - ref).max() <= delta + 1e-12
                assert ((i, j) in kept) == inside

    def test_expurgation_vacuous_threshold(self):
        par = parallel_problem(0.3)
        spec = EnsembleSpec("expurgated", q1=par["q1"], q2=par["q2"], psi=par["psi"],
                            rate_split=(0.4, 0.4))
        words, info = draw_codebook(spec, 10, spec.rate_split, derive_rng(9, 1, 0),
                                    delta=1.0)
        assert info["n_kept"] == info["M1"] * info["M2"]

    def test_cell_budget_guard(self):
        spec = EnsembleSpec("iid", q=[0.5, 0.5])
        with pytest.raises(BudgetError):
            draw_codebook(spec, 64, 1.0, derive_rng(1, 1, 0), max_cells=1e6)


class TestEncode:
    def test_single_codeword(self):
        idx, d0ps, ties = encode(np.array([0, 1]), np.array([[1, 1]]), HAMMING,
                                 "first_index")
        assert idx == 0 and ties == 1
        assert d0ps == pytest.approx(0.5)

    def test_pessimistic_takes_worst_true_distortion(self):
        # both words tie at zero encoding cost; the second is worse under d1
        x = np.array([1, 1])
        words = np.array([[1, 1], [0, 0]])
        idx, _, ties = encode(x, words, ONE_SIDED, "pessimistic", d1=HAMMING)
        assert ties == 2 and idx == 1
        idx, _, _ = encode(x, words, ONE_SIDED, "first_index")
        assert idx == 0

    def test_uniform_needs_rng_and_is_seeded(self):
        x = np.array([1, 1])
        words = np.array([[1, 1], [0, 0]])
        with pytest.raises(ValueError):
            encode(x, words, ONE_SIDED, "uniform")
        picks = {encode(x, words, ONE_SIDED, "uniform", derive_rng(0, 2, t))[0]
                 for t in range(8)}
        assert picks == {0, 1}

    def test_exhaustive_rescan_agreement(self):
        rng = np.random.default_rng(17)
        d0 = np.round(rng.uniform(0, 1, (3, 3)), 3)
        for _ in range(5):
            x = rng.integers(0, 3, 20)
            words = rng.integers(0, 3, (50, 20))
            idx, d0ps, _ = encode(x, words, d0, "first_index")
            brute = np.array([d0[x, w].sum() for w in words])
            assert brute[idx] == pytest.approx(brute.min(), abs=1e-12)
            assert d0ps == pytest.approx(brute.min() / 20, abs=1e-12)

    def test_one_sided_composition_book_minimizes_true_metric_too(self):
        # with balanced compositions, ranking by the one-sided metric is
        # the same as ranking by symbol mismatches
        prob = binary_problem()
        spec = EnsembleSpec("cc", q=prob["q"])
        rng = derive_rng(23, 1, 0)
        words, _ = draw_codebook(spec, 16, 0.5, rng)
        x = derive_rng(23, 0, 0).integers(0, 2, 16)
        idx, _, _ = encode(x, words, prob["d0"], "pessimistic", d1=prob["d1"])
        d1_tot = np.array([prob["d1"][x, w].sum() for w in words])
        assert d1_tot[idx] == pytest.approx(d1_tot.min(), abs=1e-12)


class TestRunTrials:
    def test_bit_identical_determinism(self):
        prob = binary_problem()
        spec = EnsembleSpec("cc", q=prob["q"])
        cfg = SimConfig(n=24, rate_bits=0.5, trials=40, seed=99)
        a = run_trials(prob["px"], spec, cfg, prob["d0"], prob["d1"], 0.11)
        b = run_trials(prob["px"], spec, cfg, prob["d0"], prob["d1"], 0.11)
        assert a == b

    def test_type_path_matches_literal_path_statistically(self):
        prob = binary_problem()
        spec = EnsembleSpec("iid", q=prob["q"])
        base = dict(n=24, rate_bits=0.5, trials=400, seed=31)
        lit = run_trials(prob["px"], spec, SimConfig(method="literal", **base),
                         prob["d0"], prob["d1"], 0.2)
        typ = run_trials(prob["px"], spec, SimConfig(method="types", **base),
                         prob["d0"], prob["d1"], 0.2)
        assert lit.method == "literal" and typ.method == "types"
        assert typ.mean_d1 == pytest.approx(lit.mean_d1, abs=0.03)
        assert typ.mean_d0 == pytest.approx(lit.mean_d0, abs=0.02)

    def test_quantiles_ordered_and_exceedance_bounds(self):
        prob = binary_problem()
        spec = EnsembleSpec("cc", q=prob["q"])
        cfg = SimConfig(n=32, rate_bits=0.5, trials=60, seed=5)
        st_ = run_trials(prob["px"], spec, cfg, prob["d0"], prob["d1"], -1.0)
        q5, q50, q95 = st_.d1_quantiles
        assert q5 <= q50 <= q95
        assert st_.exceedance == 1.0
        st2 = run_trials(prob["px"], spec, cfg, prob["d0"], prob["d1"], 10.0)
        assert st2.exceedance == 0.0

    def test_fixed_codebook_mode(self):
        prob = binary_problem()
        spec = EnsembleSpec("cc", q=prob["q"])
        cfg = SimConfig(n=20, rate_bits=0.4, trials=10, seed=2, fresh_codebook=False)
        st_ = run_trials(prob["px"], spec, cfg, prob["d0"], prob["d1"], 0.2)
        assert st_.trials == 10

    def test_literal_budget_guard(self):
        prob = binary_problem()
        spec = EnsembleSpec("cc", q=prob["q"])
        cfg = SimConfig(n=400, rate_bits=0.5, trials=5, seed=1, method="literal")
        with pytest.raises(BudgetError):
            run_trials(prob["px"], spec, cfg, prob["d0"], prob["d1"], 0.1)

    def test_types_path_rejects_two_layer_ensembles(self):
        par = parallel_problem(0.3)
        spec = EnsembleSpec("expurgated", q1=par["q1"], q2=par["q2"], psi=par["psi"],
                            rate_split=(2.0, 2.0))
        cfg = SimConfig(n=200, rate_bits=4.0, trials=2, seed=1)
        with pytest.raises(BudgetError):
            run_trials(par["px"], spec, cfg, par["d0"], par["d1"], 0.1)

    def test_expurgated_effective_rate_reported(self):
        par = parallel_problem(0.3)
        spec = EnsembleSpec("expurgated", q1=par["q1"], q2=par["q2"], psi=par["psi"],
                            rate_split=(0.3, 0.3))
        cfg = SimConfig(n=20, rate_bits=0.6, trials=8, seed=12, delta=0.2)
        st_ = run_trials(par["px"], spec, cfg, par["d0"], par["d1"], 0.2)
        assert st_.effective_rate is not None
        assert 0.0 <= st_.effective_rate <= 0.6 + 1e-9

    def test_superposition_runs_literal(self):
        tern = ternary_problem()
        spec = EnsembleSpec("superposition", q_uxhat=tern["q_uxhat"],
                            rate_split=(0.2, 0.3))
        cfg = SimConfig(n=18, rate_bits=0.5, trials=10, seed=4)
        st_ = run_trials(tern["px"], spec, cfg, tern["d0"], tern["d1"], 0.3)
        assert st_.method == "literal"
        assert 0.0 <= st_.mean_d1 <= 1.0


class TestTieRules:
    def test_first_index_equals_uniform_without_ties(self):
        # continuous distortions are tie-free almost surely
        model = gaussian_sign_model(1.0, 1.0)
        cfg_f = SimConfig(n=10, rate_bits=1.0, trials=40, seed=21, tie_rule="first_index")
        cfg_u = SimConfig(n=10, rate_bits=1.0, trials=40, seed=21, tie_rule="uniform")
        a = run_trials_continuous(model, cfg_f, 0.25)
        b = run_trials_continuous(model, cfg_u, 0.25)
        assert a.mean_tie_count == 1.0
        assert a.mean_d1 == b.mean_d1 and a.mean_d0 == b.mean_d0

    def test_pessimistic_uniform_gap_at_high_rate(self):
        prob = binary_problem()
        spec = EnsembleSpec("iid", q=prob["q"])
        means = {}
        for tie in ("pessimistic", "uniform"):
            cfg = SimConfig(n=200, rate_bits=0.75, trials=60, seed=7, tie_rule=tie)
            means[tie] = run_trials(prob["px"], spec, cfg, prob["d0"],
                                    prob["d1"], 0.44).mean_d1
        assert means["pessimistic"] - means["uniform"] > 0.1

    def test_exceedance_near_analytic_value(self):
        prob = binary_problem()
        spec = EnsembleSpec("cc", q=prob["q"])
        cfg = SimConfig(n=400, rate_bits=0.5, trials=100, seed=7)
        st_ = run_trials(prob["px"], spec, cfg, prob["d0"], prob["d1"],
                         0.11002786443835955 + 0.05)
        assert st_.exceedance < 0.1


class TestTypeCoverage:
    def test_single_codeword_book(self):
        prob = binary_problem()
        spec = EnsembleSpec("cc", q=prob["q"])
        cfg = SimConfig(n=20, rate_bits=0.0, trials=5, seed=3, delta=5.0)
        rep = check_type_coverage(prob["px"], spec, cfg, prob["d0"])
        # a huge slack empties the target set and forbids violations: the
        # single realized type can trip neither side
        assert rep.clean_trial_fraction == 1.0
        assert rep.mean_coverage == 1.0

    def test_requires_composition_ensemble(self):
        prob = binary_problem()
        spec = EnsembleSpec("iid", q=prob["q"])
        cfg = SimConfig(n=20, rate_bits=0.1, trials=2, seed=3, delta=0.2)
        with pytest.raises(ValueError):
            check_type_coverage(prob["px"], spec, cfg, prob["d0"])

    def test_violations_and_coverage_shapes(self):
        prob = binary_problem()
        spec = EnsembleSpec("cc", q=prob["q"])
        cfg = SimConfig(n=40, rate_bits=0.2, trials=6, seed=3, delta=0.2)
        rep = check_type_coverage(prob["px"], spec, cfg, prob["d0"])
        assert len(rep.violations_per_trial) == 6
        assert len(rep.coverage_per_trial) == 6
        assert 0.0 <= rep.mean_coverage <= 1.0


class TestSimConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SimConfig(n=0, rate_bits=0.5, trials=10, seed=1)
        with pytest.raises(ValueError):
            SimConfig(n=10, rate_bits=0.5, trials=0, seed=1)
        with pytest.raises(ValueError):
            SimConfig(n=10, rate_bits=0.5, trials=10, seed=1, delta=0.0)
        with pytest.raises(ValueError):
            SimConfig(n=10, rate_bits=0.5, trials=10, seed=1, tie_rule="bogus")

    def test_stats_serialization(self):
        prob = binary_problem()
        spec = EnsembleSpec("cc", q=prob["q"])
        cfg = SimConfig(n=16, rate_bits=0.5, trials=5, seed=8)
        st_ = run_trials(prob["px"], spec, cfg, prob["d0"], prob["d1"], 0.2)
        d = st_.to_dict()
        assert d["seed"] == 8 and d["n"] == 16 and len(d["d1_quantiles"]) == 3
