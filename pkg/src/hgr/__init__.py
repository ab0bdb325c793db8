"""HGR maximal correlation features, their error exponents, and sample bounds."""

from .ace import AceConfig, FeatureMap, ace_fit, feature_to_phi, phi_to_feature
from .cdm import (
    Cdm,
    empirical_cdm,
    hscore,
    learning_error,
    metric_bound_check,
    semi_cdm,
    true_cdm,
)
from .distributions import (
    EmpiricalCounts,
    JointDistribution,
    PerturbationDirection,
    counts_from_distribution,
    diagonal_family,
    empirical_from_perturbation,
    from_matrix,
    kl_divergence,
    load_distribution,
    load_samples,
    merge_counts,
    perturbation_from_empirical,
    random_distribution,
    sample_labeled,
    sample_unlabeled,
    save_distribution,
)
from .exponent import (
    ExponentReport,
    SampleBound,
    SolverConfig,
    cdm_jacobian,
    error_form,
    error_gain_degenerate,
    exponent,
    mode_pair_vector,
    sample_bound,
    trend_experiment,
)
from .montecarlo import (
    EmpiricalExponent,
    TrialBatch,
    auto_eps_grid,
    empirical_exponent,
    run_trials,
)
from .perturbation import (
    SymmetricPerturbation,
    induced_cdm_direction,
    symmetric_perturbation,
    trace_expansion_degenerate,
    trace_expansion_simple,
)
from .rng import make_rng, stream_rng
from .semi import (
    BudgetPlan,
    BudgetProblem,
    cond_embedding,
    exponent_semi,
    mixing_map,
    optimal_ratio,
    sample_bound_semi,
    semi_error_form,
    semi_error_gain_degenerate,
)

__version__ = "0.1.0"
