"""Markov branching systems, their conditioned-on-survival counterpart,
and the Lotka-Nagaev-type estimator of the structural parameter."""

__version__ = "0.1.0"

from .errors import (
    AllExcluded,
    DegenerateModel,
    InvalidIntensities,
    NormalizationDrift,
    NotDefinedForCritical,
    NumericsError,
    OdeFailure,
    StateOverflow,
    TimeOutOfRange,
    TruncationTooSevere,
    UndefinedAtOne,
)
from .estimator import (
    ConvergenceRow,
    EstimatorReport,
    VarianceSeries,
    collect_estimates,
    exact_variance_series,
    lotka_nagaev_estimate,
    mc_study,
    report_from_estimates,
    theorem_convergence_table,
    with_series_variance,
)
from .gf import (
    MomentPair,
    TransitionTable,
    default_j_max,
    i_fold_transition,
    population_gf,
    qprocess_gf,
    qprocess_mean,
    qprocess_moments,
    qprocess_p11,
    qprocess_p11_limit,
    qprocess_transition_probs,
    qprocess_transition_tables,
    qprocess_variance,
    stationary_gf_factor,
    transition_probs,
)
from .models import (
    BranchingModel,
    Criticality,
    IntensityVector,
    QProcessDensities,
    build_model,
    extinction_root,
    harris_sevastyanov,
    kolmogorov_constant,
    kolmogorov_constant_deflated,
    qprocess_densities,
)
from .simulate import (
    QProcessRates,
    Trajectory,
    replicate_stream,
    sample_states,
    simulate_mbs,
    simulate_qprocess,
    state_at,
)

__all__ = [
    "AllExcluded",
    "BranchingModel",
    "ConvergenceRow",
    "Criticality",
    "DegenerateModel",
    "EstimatorReport",
    "IntensityVector",
    "InvalidIntensities",
    "MomentPair",
    "NormalizationDrift",
    "NotDefinedForCritical",
    "NumericsError",
    "OdeFailure",
    "QProcessDensities",
    "QProcessRates",
    "StateOverflow",
    "TimeOutOfRange",
    "Trajectory",
    "TransitionTable",
    "TruncationTooSevere",
    "UndefinedAtOne",
    "VarianceSeries",
    "build_model",
    "collect_estimates",
    "default_j_max",
    "exact_variance_series",
    "extinction_root",
    "harris_sevastyanov",
    "i_fold_transition",
    "kolmogorov_constant",
    "kolmogorov_constant_deflated",
    "lotka_nagaev_estimate",
    "mc_study",
    "population_gf",
    "qprocess_densities",
    "qprocess_gf",
    "qprocess_mean",
    "qprocess_moments",
    "qprocess_p11",
    "qprocess_p11_limit",
    "qprocess_transition_probs",
    "qprocess_transition_tables",
    "qprocess_variance",
    "replicate_stream",
    "report_from_estimates",
    "sample_states",
    "simulate_mbs",
    "simulate_qprocess",
    "state_at",
    "stationary_gf_factor",
    "theorem_convergence_table",
    "transition_probs",
    "with_series_variance",
]
