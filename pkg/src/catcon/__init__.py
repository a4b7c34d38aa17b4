"""catcon: a staged voting-and-reputation simulator for catalogue curation.

Doctor agents endorse treatments and peer-rate each other's endorsements by
staking credit points; per-stage settlement normalizes each agent's exposure,
a hash-chained ledger records every stage, and a Monte Carlo harness runs
replicated experiments, staking-rate sweeps, and catalogue decisions.
"""

from ._version import __version__
from .catalogue import CatalogueDecision, aggregate_scores, decide_catalogue
from .config import (
    config_from_dict,
    config_to_dict,
    default_config,
    load_config,
)
from .core import (
    Action,
    ActionId,
    Agent,
    AgentId,
    ChainCheck,
    CreditLedger,
    Direction,
    FloorEvent,
    LedgerError,
    Rating,
    Role,
    StageIndex,
    StageOutcome,
    StageRecord,
    TreatmentId,
    ledger_apply,
    ledger_verify_chain,
)
from .harness import (
    BalanceSpec,
    ConfigError,
    DEFAULT_SWEEP_GRID,
    PRNG_ID,
    Replicate,
    ReplicateTrace,
    RunTrace,
    SimConfig,
    SweepResult,
    replay_balances,
    run_simulation,
    sweep_staking_rate,
)
from .policies import (
    Mode,
    NoisyQuality,
    PolicyConfig,
    RatingPool,
    TruthfulQuality,
    assess_endorse,
    choose_action,
    choose_ratings,
    decide_participation,
    update_staking_policy,
)
from .settlement import (
    StageSubmissions,
    SubmissionError,
    action_component,
    coeff_action,
    coeff_rating,
    rating_component,
    settle_stage,
)

__all__ = [
    "__version__",
    "Action",
    "Agent",
    "AgentId",
    "BalanceSpec",
    "CatalogueDecision",
    "ChainCheck",
    "ConfigError",
    "CreditLedger",
    "DEFAULT_SWEEP_GRID",
    "Direction",
    "FloorEvent",
    "LedgerError",
    "Mode",
    "NoisyQuality",
    "PolicyConfig",
    "PRNG_ID",
    "Rating",
    "RatingPool",
    "Replicate",
    "ReplicateTrace",
    "Role",
    "RunTrace",
    "SimConfig",
    "StageOutcome",
    "StageRecord",
    "StageSubmissions",
    "SubmissionError",
    "SweepResult",
    "TruthfulQuality",
    "action_component",
    "aggregate_scores",
    "assess_endorse",
    "choose_action",
    "choose_ratings",
    "coeff_action",
    "coeff_rating",
    "config_from_dict",
    "config_to_dict",
    "decide_catalogue",
    "decide_participation",
    "default_config",
    "ledger_apply",
    "ledger_verify_chain",
    "load_config",
    "rating_component",
    "replay_balances",
    "run_simulation",
    "settle_stage",
    "sweep_staking_rate",
    "update_staking_policy",
]
