"""Age-dependent first- and second-order Markov chains of annual health expenditure.

Estimate per-age transition structure from longitudinal claims panels,
project multi-year costs through the lifted pair-state chain, and verify
everything against seeded synthetic cohorts with brute-force oracles.
"""

from .errors import (
    ConfigError,
    DataFormatError,
    DegenerateFitError,
    DuplicateRecordError,
    EmptyCohortError,
    HealthMarkovError,
    HorizonError,
    InvalidInputError,
    UnsupportedCellError,
)
from .states import (
    CostVector,
    HealthState,
    MISSING,
    StateThresholds,
    classify_cost,
    classify_costs,
    representative_cost,
)
from .panel import MissingMarker, Panel, PersonYear, build_panel, filter_cohort
from .ingest import ClaimRecord, annualize, load_claims_panel, parse_claims
from .estimate import (
    ARFit,
    CostSummary,
    DecayPath,
    ExceedanceRow,
    FrequencyCurve,
    TransitionMatrix,
    TransitionTensor,
    ar_regression,
    conditional_cost_quantiles,
    estimate_order1,
    estimate_order1_family,
    estimate_order2,
    estimate_order2_family,
    exceedance_proportions,
    five_year_groups,
    multi_year_state_frequency,
    pool_order1,
    pool_order2,
    shock_frequency,
    state_fractions,
)
from .lifted import (
    LiftedMatrix,
    ProjectionResult,
    lift,
    lift_family,
    pair_index,
    project_cumulative,
    shock_cost_difference,
    step_expectation,
)
from .persistency import (
    DifferenceCurve,
    ForecastDistribution,
    iterate_forward,
    persistency_difference,
    total_variation,
)
from .synthetic import (
    GroundTruthChain,
    enumerate_expectation,
    generate_panel,
    order1_consistent_chain,
    random_chain,
    write_claims,
)

__version__ = "0.1.0"

__all__ = [
    "ARFit",
    "ClaimRecord",
    "ConfigError",
    "CostSummary",
    "CostVector",
    "DataFormatError",
    "DecayPath",
    "DegenerateFitError",
    "DifferenceCurve",
    "DuplicateRecordError",
    "EmptyCohortError",
    "ExceedanceRow",
    "ForecastDistribution",
    "FrequencyCurve",
    "GroundTruthChain",
    "HealthMarkovError",
    "HealthState",
    "HorizonError",
    "InvalidInputError",
    "LiftedMatrix",
    "MISSING",
    "MissingMarker",
    "Panel",
    "PersonYear",
    "ProjectionResult",
    "StateThresholds",
    "TransitionMatrix",
    "TransitionTensor",
    "UnsupportedCellError",
    "annualize",
    "ar_regression",
    "build_panel",
    "classify_cost",
    "classify_costs",
    "conditional_cost_quantiles",
    "enumerate_expectation",
    "estimate_order1",
    "estimate_order1_family",
    "estimate_order2",
    "estimate_order2_family",
    "exceedance_proportions",
    "filter_cohort",
    "five_year_groups",
    "generate_panel",
    "iterate_forward",
    "lift",
    "lift_family",
    "load_claims_panel",
    "multi_year_state_frequency",
    "order1_consistent_chain",
    "pair_index",
    "parse_claims",
    "persistency_difference",
    "pool_order1",
    "pool_order2",
    "project_cumulative",
    "random_chain",
    "representative_cost",
    "shock_cost_difference",
    "shock_frequency",
    "state_fractions",
    "step_expectation",
    "total_variation",
    "write_claims",
]
