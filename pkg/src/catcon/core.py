"""Domain vocabulary and the credit ledger.

Agents endorse treatments through staked actions, peer-rate each other's
actions through signed staked ratings, and carry a credit-point balance.
Settled stages are appended to a hash-chained log so a finished run can be
audited end to end.

Canonical serialization (used for stage hashing, documented byte-exactly):
UTF-8 JSON, object keys sorted lexicographically, no whitespace, every
float rendered with ``format(x, '.17g')`` after normalizing negative zero
to zero. A stage record's hash is SHA-256 over
``prev_hash || canonical_json(outcomes)``.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

log = logging.getLogger(__name__)

AgentId = int
TreatmentId = int
ActionId = int
StageIndex = int

GENESIS_HASH = bytes(32)


class LedgerError(Exception):
    """Raised when a stage is applied out of order or otherwise malformed."""


class Role(Enum):
    C1_ACTOR = "c1_actor"
    C2_RATER = "c2_rater"
    C3_INVESTOR = "c3_investor"


class Direction(Enum):
    ENDORSE = "endorse"
    OPPOSE = "oppose"


@dataclass
class Agent:
    """One participant. Balance is mirrored from the ledger after each stage.

    ``expertise`` in [0, 1] scales how reliably the agent reads treatment
    quality (1 = assessments only limited by the configured bias floor,
    0 = coin flips); it only matters under the noisy sign model.
    """

    id: AgentId
    roles: frozenset[Role]
    balance: float
    staking_rate_action: float
    staking_rate_rating: float
    skip_probability: float
    expertise: float = 1.0

    def __post_init__(self) -> None:
        if self.balance < 0:
            raise ValueError(f"agent {self.id}: balance must be >= 0")
        for name in ("staking_rate_action", "staking_rate_rating",
                     "skip_probability", "expertise"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"agent {self.id}: {name} must be in [0, 1], got {v}")

    @property
    def is_actor(self) -> bool:
        return Role.C1_ACTOR in self.roles

    @property
    def is_rater(self) -> bool:
        return Role.C2_RATER in self.roles


@dataclass(frozen=True)
class Action:
    """A staked endorsement/opposition of one treatment in one stage."""

    id: ActionId
    actor: AgentId
    stage: StageIndex
    treatment: TreatmentId
    direction: Direction
    stake: float

    def __post_init__(self) -> None:
        if self.stake < 0:
            raise ValueError(f"action {self.id}: stake must be >= 0")


@dataclass(frozen=True)
class Rating:
    """A signed staked evaluation of another agent's action.

    Sign of ``signed_stake`` encodes approve (+) / disapprove (-); the
    magnitude is the credit staked on the evaluation.
    """

    rater: AgentId
    target_action: ActionId
    stage: StageIndex
    signed_stake: float


@dataclass(frozen=True)
class StageOutcome:
    """Per-agent settlement breakdown for one stage.

    ``delta_action`` is the action-derived credit change, ``delta_rating``
    the rating-derived one; both are normalized into [-1, 1] by their
    coefficients. ``delta_total`` is their sum.
    """

    delta_action: float
    delta_rating: float
    delta_total: float
    coeff_action: float
    coeff_rating: float


@dataclass(frozen=True)
class StageRecord:
    """One settled stage in the append-only log.

    ``hash`` = SHA-256(prev_hash || canonical_json(outcomes)). Fees are kept
    for audit/replay but are not part of the hashed payload.
    """

    stage: StageIndex
    outcomes: dict[AgentId, StageOutcome]
    prev_hash: bytes
    hash: bytes
    fees: dict[AgentId, float] = field(default_factory=dict)


@dataclass(frozen=True)
class FloorEvent:
    """A balance update that would have gone negative and was clipped to 0."""

    stage: StageIndex
    agent: AgentId
    deficit: float  # amount of loss that exceeded the agent's balance


@dataclass(frozen=True)
class ChainCheck:
    valid: bool
    first_bad_stage: StageIndex | None = None


# --- canonical serialization -------------------------------------------------

def canonical_float(x: float) -> str:
    """Render a float as a fixed 17-significant-digit decimal.

    Negative zero normalizes to '0' so arithmetically equal values always
    hash identically. 17 significant digits round-trip any IEEE-754 double.
    """
    if x == 0.0:
        x = 0.0
    if math.isnan(x) or math.isinf(x):
        raise ValueError(f"non-finite value cannot be serialized: {x!r}")
    return format(x, ".17g")


# exact-value fast paths for the settlement values that recur every stage;
# float hashing treats -0.0 == 0.0, matching the normalization rule
_COMMON_FLOATS = {0.0: "0", 1.0: "1", -1.0: "-1", 2.0: "2", -2.0: "-2",
                  0.5: "0.5", -0.5: "-0.5"}


def canonical_outcomes_json(outcomes: dict[AgentId, StageOutcome]) -> bytes:
    """Canonical JSON for a stage's outcomes map.

    Keys are decimal agent ids sorted lexicographically (standard
    sorted-keys JSON); outcome fields appear in alphabetical order.
    """
    common = _COMMON_FLOATS
    parts: list[str] = []
    for key in sorted(str(a) for a in outcomes):
        o = outcomes[int(key)]
        parts.append(
            '"%s":{"coeff_action":%s,"coeff_rating":%s,"delta_action":%s,'
            '"delta_rating":%s,"delta_total":%s}'
            % (
                key,
                common.get(o.coeff_action) or canonical_float(o.coeff_action),
                common.get(o.coeff_rating) or canonical_float(o.coeff_rating),
                common.get(o.delta_action) or canonical_float(o.delta_action),
                common.get(o.delta_rating) or canonical_float(o.delta_rating),
                common.get(o.delta_total) or canonical_float(o.delta_total),
            )
        )
    return ("{" + ",".join(parts) + "}").encode("utf-8")


def stage_hash(prev_hash: bytes, outcomes: dict[AgentId, StageOutcome]) -> bytes:
    return hashlib.sha256(prev_hash + canonical_outcomes_json(outcomes)).digest()


# --- credit ledger -----------------------------------------------------------

class CreditLedger:
    """Per-agent balances plus the hash-chained log of settled stages.

    Single writer per run; appended records are immutable. Total supply is
    recomputed as the exact sum of balances after every apply, so fee burns
    and floor clips are reflected automatically.
    """

    def __init__(self, balances: dict[AgentId, float]):
        for agent, bal in balances.items():
            if bal < 0:
                raise ValueError(f"agent {agent}: initial balance must be >= 0")
        self.balances: dict[AgentId, float] = dict(balances)
        self.total_supply: float = math.fsum(self.balances.values())
        self.stage_log: list[StageRecord] = []
        self.floor_events: list[FloorEvent] = []

    @property
    def next_stage(self) -> StageIndex:
        return len(self.stage_log)

    @property
    def head_hash(self) -> bytes:
        return self.stage_log[-1].hash if self.stage_log else GENESIS_HASH

    def apply(
        self,
        stage: StageIndex,
        outcomes: dict[AgentId, StageOutcome],
        fees: dict[AgentId, float] | None = None,
    ) -> StageRecord:
        """Settle one stage: apply deltas minus fees, floor at 0, append a record.

        Rejects out-of-order stage indices. Fees are burned (they reduce the
        recomputed supply). A balance pushed below zero is clipped to zero
        and the shortfall logged as a FloorEvent.
        """
        if stage != self.next_stage:
            raise LedgerError(
                f"stage index mismatch: expected {self.next_stage}, got {stage}"
            )
        fees = fees or {}
        for agent in outcomes:
            if agent not in self.balances:
                raise LedgerError(f"outcome for unknown agent {agent}")
        for agent in fees:
            if agent not in self.balances:
                raise LedgerError(f"fee for unknown agent {agent}")

        touched = sorted(set(outcomes) | set(fees))
        for agent in touched:
            delta = outcomes[agent].delta_total if agent in outcomes else 0.0
            new_balance = self.balances[agent] + delta - fees.get(agent, 0.0)
            if new_balance < 0.0:
                self.floor_events.append(FloorEvent(stage, agent, -new_balance))
                log.debug("stage %d: floored agent %d (deficit %g)",
                          stage, agent, -new_balance)
                new_balance = 0.0
            self.balances[agent] = new_balance

        self.total_supply = math.fsum(self.balances.values())
        record = StageRecord(
            stage=stage,
            outcomes=dict(outcomes),
            prev_hash=self.head_hash,
            hash=stage_hash(self.head_hash, outcomes),
            fees={a: f for a, f in fees.items() if f != 0.0},
        )
        self.stage_log.append(record)
        return record

    def verify_chain(self) -> ChainCheck:
        """Recompute every record hash and linkage; corruption is a result, not an error."""
        prev = GENESIS_HASH
        for record in self.stage_log:
            if record.prev_hash != prev:
                return ChainCheck(False, record.stage)
            if stage_hash(prev, record.outcomes) != record.hash:
                return ChainCheck(False, record.stage)
            prev = record.hash
        return ChainCheck(True, None)


def ledger_apply(
    ledger: CreditLedger,
    outcomes: dict[AgentId, StageOutcome],
    fees: dict[AgentId, float] | None = None,
) -> StageRecord:
    """Apply outcomes for the ledger's next stage index."""
    return ledger.apply(ledger.next_stage, outcomes, fees)


def ledger_verify_chain(ledger: CreditLedger) -> ChainCheck:
    return ledger.verify_chain()
