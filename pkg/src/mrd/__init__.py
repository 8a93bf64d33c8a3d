"""Mismatched distortion-rate bounds for memoryless sources.

Analytic achievability calculators for four random-coding ensembles
over finite alphabets, a dual formulation for general alphabets, the
closed-form worked examples, and a finite-blocklength random-codebook
simulator.
"""

from .core import (DistortionMatrix, JointPmf, Pmf, binary_entropy,
                   expected_distortion, kl_to_product, mutual_info, ternary_entropy)
from .ensembles import (CurvePoint, EnsembleSpec, d1bar_cc, d1bar_expurgated,
                        d1bar_iid, d1bar_superposition, optimize_q_grid,
                        sweep_rate_split)
from .errors import (BudgetError, ConfigError, ConvergenceError, MrdError,
                     SamplingBudgetError)
from .general_dual import (GeneralModel, TiltedJoint, discrete_model,
                           gaussian_quadratic_model, gaussian_sign_model, log_mgf,
                           log_mgf_derivative, mismatched_d1, r_max_nats,
                           rate_from_d0, solve_lambda_star)
from .montecarlo import (SimConfig, SimStats, check_type_coverage, draw_codebook,
                         encode, run_trials, run_trials_continuous)
from .solvers import (ConstraintSet, Stage1Result, TieResult, max_d1_over_ties,
                      min_d0_cc, min_d0_iid, min_d0_multi, sinkhorn_tilt)

__version__ = "0.1.0"
