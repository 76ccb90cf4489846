"""Modified policy iteration for risk-sensitive (exponential-cost) MDPs."""

__version__ = "0.1.0"

from .approx import (
    ApproxBoundReport,
    ApproxConfig,
    FloorReport,
    approx_evaluation_perturb,
    approx_improvement,
    boundedness_floor,
    check_approx_sandwich,
    run_approx_mpi,
    theorem_bound,
    verify_contracts,
)
from .errors import (
    ConvergenceError,
    DiagnosticUnavailable,
    DomainError,
    ParameterError,
    PreconditionError,
    RsmpiError,
    SizeCapError,
)
from .model import (
    MdpModel,
    Policy,
    RiskParams,
    ValidationReport,
    Violation,
    apply_mixing,
    chain_period,
    check_policy_irreducible_aperiodic,
    format_policy,
    generate_random,
    is_irreducible_aperiodic,
    parse_policy,
    risk_neutral_average_cost,
    stationary_distribution,
    validate_model,
)
from .mpi import (
    ContractionDiagnostic,
    MpiConfig,
    MpiIterationRecord,
    MpiTrace,
    SandwichReport,
    SolveResult,
    check_monotone_u,
    check_sandwich,
    contraction_diagnostic,
    greedy_improvement,
    partial_evaluation,
    run_mpi,
    solve,
)
from .operators import (
    BoundsTriple,
    PositiveValueVector,
    apply_optimal_operator,
    apply_policy_operator,
    bounds_triple,
    normalize,
    weighted_matrix,
)
from .oracles import (
    BruteForceResult,
    PolicyEvaluation,
    brute_force_optimal,
    brute_force_original,
    evaluate_policy,
    evaluate_policy_original,
    finite_horizon_log_mgf,
    perron_eigenpair,
    relative_value_iteration,
    span,
)
from .transform import (
    PositivityCertificate,
    TransformedMdp,
    forward_cost,
    invert_cost,
    positivity_horizon,
    transform,
)
