"""Lambda policy iteration on finite MDPs, with numerical certification of its error bounds."""

from .mdp import (
    InvalidPolicyError,
    LinearSolveError,
    Mdp,
    NonConvergenceError,
    apply_bellman_optimal,
    apply_bellman_policy,
    apply_tlambda,
    evaluate_policy,
    greedy,
    mk_apply,
    mk_fixed_point,
    optimal_value,
    policy_reward,
    policy_transition_matrix,
    td_increment,
)
from .seminorms import SeminormSpec, max_norm, mixed_distribution, span_inf, span_p, weighted_lp_norm
from .solvers import (
    IterationTrace,
    NoiseModel,
    SolverConfig,
    run_lambda_pi,
    run_modified_policy_iteration,
    run_policy_iteration,
    run_value_iteration,
    tail_limsup,
)
from .bounds import (
    BOUND_IDS,
    BoundReport,
    appendix_c_violations,
    approx_bound_matrices,
    check_approx_bounds,
    check_convergence_case_bounds,
    check_exact_rate_bounds,
    concentration,
    convergence_case_matrices,
    exact_rate_matrices,
    exact_rate_sweep,
    matrix_A,
    run_checks,
    seminorm_bound_suite,
    stopping_test,
)
from .harness import (
    ExperimentSpec,
    GeneratorSpec,
    counterexample_mdp,
    default_campaign,
    lambda_sweep,
    noncontraction_witness,
    random_mdp,
    run_experiment,
)
from .io import read_experiment, read_mdp, write_mdp

__version__ = "0.1.0"

__all__ = [
    "InvalidPolicyError",
    "LinearSolveError",
    "Mdp",
    "NonConvergenceError",
    "apply_bellman_optimal",
    "apply_bellman_policy",
    "apply_tlambda",
    "evaluate_policy",
    "greedy",
    "mk_apply",
    "mk_fixed_point",
    "optimal_value",
    "policy_reward",
    "policy_transition_matrix",
    "td_increment",
    "SeminormSpec",
    "max_norm",
    "mixed_distribution",
    "span_inf",
    "span_p",
    "weighted_lp_norm",
    "IterationTrace",
    "NoiseModel",
    "SolverConfig",
    "run_lambda_pi",
    "run_modified_policy_iteration",
    "run_policy_iteration",
    "run_value_iteration",
    "tail_limsup",
    "BOUND_IDS",
    "BoundReport",
    "appendix_c_violations",
    "approx_bound_matrices",
    "check_approx_bounds",
    "check_convergence_case_bounds",
    "check_exact_rate_bounds",
    "concentration",
    "convergence_case_matrices",
    "exact_rate_matrices",
    "exact_rate_sweep",
    "matrix_A",
    "run_checks",
    "seminorm_bound_suite",
    "stopping_test",
    "ExperimentSpec",
    "GeneratorSpec",
    "counterexample_mdp",
    "default_campaign",
    "lambda_sweep",
    "noncontraction_witness",
    "random_mdp",
    "run_experiment",
    "read_experiment",
    "read_mdp",
    "write_mdp",
]
