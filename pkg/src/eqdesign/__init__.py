"""Strict-equilibrium installability: checks, witnesses, design, verification.

The package decides when a target strategy or Markov policy can be made the
strictly stable outcome of some game, constructs explicit payoffs doing so,
designs minimal-cost reward modifications via linear programming, and
measures strictness margins of given rewards.
"""

__version__ = "0.1.0"

from .design import (
    CostKind,
    CostSpec,
    DesignConfig,
    DesignResult,
    build_mg_lp,
    build_nfg_lp,
    design,
    evaluate_cost,
)
from .games import (
    Conditional,
    DistributionError,
    JointMixedStrategy,
    MarkovGameSkeleton,
    MarkovPolicy,
    NormalFormGame,
    RewardFunction,
    ShapeError,
    ValueTables,
    clean_distribution,
    conditional,
    conditional_matrix,
    cosine_gap,
    is_product,
    nfg_as_markov,
    strategy_as_policy,
    support,
)
from .installability import (
    Concept,
    DeviationClass,
    InstallabilityReport,
    MarkovInstallability,
    NotProductError,
    check,
    check_markov,
    check_sce,
    check_scce,
    check_sne,
)
from .lp import (
    Constraint,
    LinearProgram,
    LpInputError,
    LpSolution,
    LpStatus,
    solve,
)
from .verify import (
    BestResponse,
    GapReport,
    best_response,
    check_strict,
    nfg_oracle,
    policy_eval,
    visitation,
)
from .witness import (
    EpsilonConfig,
    GammaResult,
    InfeasibleEpsilonError,
    StageCheckError,
    epsilon_markov_witness,
    epsilon_witness,
    gamma_cce,
    gamma_cce_statement,
    gamma_ce,
    markov_witness,
    witness_utility,
)

__all__ = [
    "__version__",
    "BestResponse",
    "Concept",
    "Conditional",
    "Constraint",
    "CostKind",
    "CostSpec",
    "DesignConfig",
    "DesignResult",
    "DeviationClass",
    "DistributionError",
    "EpsilonConfig",
    "GammaResult",
    "GapReport",
    "InfeasibleEpsilonError",
    "InstallabilityReport",
    "JointMixedStrategy",
    "LinearProgram",
    "LpInputError",
    "LpSolution",
    "LpStatus",
    "MarkovGameSkeleton",
    "MarkovInstallability",
    "MarkovPolicy",
    "NormalFormGame",
    "NotProductError",
    "RewardFunction",
    "ShapeError",
    "StageCheckError",
    "ValueTables",
    "best_response",
    "build_mg_lp",
    "build_nfg_lp",
    "check",
    "check_markov",
    "check_sce",
    "check_scce",
    "check_sne",
    "check_strict",
    "clean_distribution",
    "conditional",
    "conditional_matrix",
    "cosine_gap",
    "design",
    "epsilon_markov_witness",
    "epsilon_witness",
    "evaluate_cost",
    "gamma_cce",
    "gamma_cce_statement",
    "gamma_ce",
    "is_product",
    "markov_witness",
    "nfg_as_markov",
    "nfg_oracle",
    "policy_eval",
    "solve",
    "strategy_as_policy",
    "support",
    "visitation",
    "witness_utility",
]
