"""Delay Caputo fractional differential equations.

Method-of-steps Picard solver in a Mittag-Leffler weighted metric, a PECE
cross-check solver, Mittag-Leffler evaluation, growth certificates and the
``exp(t^2)`` counterexample.
"""

from .errors import (
    BetaSelectionError,
    BlowUpError,
    CoincidenceError,
    NonConvergenceError,
    RhsEvaluationError,
    SolverError,
)
from .fracquad import caputo_residual, pr_weights, pt_weights, rl_integral_grid
from .growth import (
    certify_growth,
    check_h2,
    counterexample_log_solution,
    counterexample_problem,
    counterexample_solution,
    exponential_bound_probe,
)
from .mlf import MlfParams, gamma_fn, ml_eval, ml_log_eval
from .model import (
    ConstantHistory,
    DelayProblem,
    ExprHistory,
    ProblemValidationError,
    SampledHistory,
    Trajectory,
    UniformGrid,
    build_grid,
    estimate_lipschitz,
    validate_problem,
)
from .pece import PeceConfig, solve_pece
from .picard import SegmentReport, WeightedNorm, choose_beta, extend_horizon, solve_picard, solve_segment
from .rhs_expr import ExprEvalError, ExprSyntaxError, RhsExpr, parse

__version__ = "0.1.0"
