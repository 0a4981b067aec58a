"""District-fair participatory budgeting: fair shares, exact and approximate solvers, generators."""

from dfpb.df1 import (
    CoverageModel,
    CoverageReport,
    Df1pQuery,
    ScaledInstance,
    amplify_runs,
    coverage,
    df1_complete,
    hoeffding_bound,
    maximize_coverage,
    residual,
    scale_instance,
    solve_df1_pipeline,
    solve_within_budget,
)
from dfpb.errors import (
    ApplicabilityError,
    CapabilityError,
    DfpbError,
    DomainError,
    InfeasibleError,
    ValidationError,
)
from dfpb.exact import OracleResult, oracle_df1_frontier, oracle_solve, solve_exact_dp
from dfpb.hardness import (
    GapParams,
    X3cInput,
    check_fractional_feasible,
    export_dflp,
    gap_instance,
    has_exact_cover,
    reduce_x3c,
)
from dfpb.lottery import MwConfig, blend_district, mw_regret_check, run_mw_lottery
from dfpb.model import (
    District,
    FairShareProfile,
    FractionalOutcome,
    Instance,
    Lottery,
    Outcome,
    Project,
    cost,
    expected_welfare,
    is_budget_feasible,
    is_df1,
    is_district_fair,
    total_welfare,
    welfare,
)
from dfpb.shares import (
    CoverKnapsackQuery,
    compute_fair_share,
    compute_fair_shares,
    solve_cover_knapsack,
)
from dfpb.uga import UnanimityCertificate, certify, conditional_cover, solve_uga

__version__ = "0.1.0"
