"""Per-stage agent behavior: participation, actions, rating choices, learning.

Direction choices are anchored to a per-treatment ground-truth quality in
[0, 1] so that agreement between agents has a common referent. Two sign
models exist:

* truthful: endorse iff quality >= 0.5, deterministically;
* noisy(epsilon): the assessed quality is the true quality plus a transient
  per-(stage, treatment) shock shared by everyone that stage, and the
  resulting direction is flipped with probability
  ``(1 - e) * 0.5 + e * epsilon * (1 - clarity)`` where ``e`` is the
  agent's expertise and ``clarity = |2q - 1|`` of the shocked quality.
  A fully expert agent misreads a perfectly ambiguous treatment at rate
  epsilon (the bias floor) and a clear-cut one almost never; an expertise-0
  agent is a coin flip everywhere.

The learning rule is deliberately the simplest thing that can couple
realized outcomes back into stake sizing: multiply the staking rate by
(1 +/- learning_rate) following the sign of the realized component, clamped
to the configured bounds. It is isolated here so it can be swapped out.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from enum import Enum
from random import Random
from typing import Sequence

from .core import Action, ActionId, Agent, Direction, Rating, StageIndex, StageOutcome, TreatmentId

__all__ = [
    "Mode",
    "TruthfulQuality",
    "NoisyQuality",
    "PolicyConfig",
    "RatingPool",
    "assess_endorse",
    "decide_participation",
    "choose_action",
    "choose_ratings",
    "update_staking_policy",
]


class Mode(Enum):
    NON_LEARNING = "nonlearning"
    LEARNING = "learning"


@dataclass(frozen=True)
class TruthfulQuality:
    """Deterministic threshold assessor: endorse iff quality >= 0.5."""


@dataclass(frozen=True)
class NoisyQuality:
    """Expertise-modulated noisy assessor with bias floor ``epsilon``."""

    epsilon: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")


SignModel = TruthfulQuality | NoisyQuality


@dataclass
class PolicyConfig:
    """Behavior parameters shared by all agents in a run."""

    mode: Mode = Mode.NON_LEARNING
    consumer_selection: bool = True
    learning_rate: float = 0.1
    staking_rate_bounds: tuple[float, float] = (0.05, 0.95)
    skip_probability: float = 0.1
    ratings_per_rater: int = 3
    sign_model: SignModel = field(default_factory=NoisyQuality)
    treatment_quality: dict[TreatmentId, float] = field(default_factory=dict)
    expertise_bounds: tuple[float, float] = (0.0, 1.0)
    quality_shock: float = 0.2

    def __post_init__(self) -> None:
        lo, hi = self.staking_rate_bounds
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError(
                f"staking_rate_bounds must satisfy 0 <= min <= max <= 1, "
                f"got {self.staking_rate_bounds}")
        if not 0.0 < self.learning_rate < 1.0:
            raise ValueError(
                f"learning_rate must be in (0, 1), got {self.learning_rate}")
        if not 0.0 <= self.skip_probability <= 1.0:
            raise ValueError(
                f"skip_probability must be in [0, 1], got {self.skip_probability}")
        if self.ratings_per_rater < 0:
            raise ValueError(
                f"ratings_per_rater must be >= 0, got {self.ratings_per_rater}")
        elo, ehi = self.expertise_bounds
        if not (0.0 <= elo <= ehi <= 1.0):
            raise ValueError(
                f"expertise_bounds must satisfy 0 <= min <= max <= 1, "
                f"got {self.expertise_bounds}")
        if not 0.0 <= self.quality_shock <= 0.5:
            raise ValueError(
                f"quality_shock must be in [0, 0.5], got {self.quality_shock}")
        for t, q in self.treatment_quality.items():
            if not 0.0 <= q <= 1.0:
                raise ValueError(
                    f"treatment_quality[{t}] must be in [0, 1], got {q}")


def assess_endorse(
    agent: Agent,
    quality: float,
    shock: float,
    rng: Random,
    model: SignModel,
) -> bool:
    """The agent's own read of a treatment: True = would endorse."""
    if isinstance(model, TruthfulQuality):
        return quality >= 0.5
    q = quality + shock
    if q < 0.0:
        q = 0.0
    elif q > 1.0:
        q = 1.0
    endorse = q >= 0.5
    clarity = abs(2.0 * q - 1.0)
    e = agent.expertise
    flip_p = (1.0 - e) * 0.5 + e * model.epsilon * (1.0 - clarity)
    if rng.random() < flip_p:
        endorse = not endorse
    return endorse


def decide_participation(agent: Agent, rng: Random) -> bool:
    """Independent per stage: skip with the agent's skip probability."""
    return rng.random() >= agent.skip_probability


def choose_action(
    agent: Agent,
    treatments: Sequence[TreatmentId],
    rng: Random,
    config: PolicyConfig,
    *,
    stage: StageIndex,
    action_id: ActionId,
    shocks: Sequence[float],
    fee: float = 0.0,
) -> Action | None:
    """Pick a treatment uniformly, take a direction on it, stake a balance fraction.

    Returns None when the agent cannot afford the submission fee.
    """
    if not treatments:
        raise ValueError("cannot choose an action from an empty treatment list")
    if agent.balance < fee:
        return None
    idx = rng.randrange(len(treatments))
    treatment = treatments[idx]
    endorse = assess_endorse(
        agent, config.treatment_quality[treatment], shocks[treatment], rng,
        config.sign_model)
    stake = agent.staking_rate_action * agent.balance
    cap = agent.balance - fee
    if stake > cap:
        stake = cap
    if stake < 0.0:
        stake = 0.0
    return Action(
        id=action_id,
        actor=agent.id,
        stage=stage,
        treatment=treatment,
        direction=Direction.ENDORSE if endorse else Direction.OPPOSE,
        stake=stake,
    )


class RatingPool:
    """Visible actions of a stage, indexed for stake-weighted target sampling."""

    __slots__ = ("actions", "cumulative", "total", "by_actor", "positive_total")

    def __init__(self, actions: Sequence[Action]):
        self.actions = list(actions)
        self.cumulative: list[float] = []
        self.by_actor: dict[int, list[int]] = {}
        self.positive_total = 0
        total = 0.0
        for i, a in enumerate(self.actions):
            total += a.stake
            self.cumulative.append(total)
            self.by_actor.setdefault(a.actor, []).append(i)
            if a.stake > 0.0:
                self.positive_total += 1
        self.total = total


def _select_targets(
    pool: RatingPool,
    own: set[int],
    n_select: int,
    rng: Random,
    weighted: bool,
) -> list[int]:
    """Distinct action indices, stake-weighted or uniform, without replacement."""
    n = len(pool.actions)
    chosen: list[int] = []
    taken = set(own)
    if weighted:
        positive_left = pool.positive_total - sum(
            1 for i in own if pool.actions[i].stake > 0.0)
        while len(chosen) < n_select and positive_left > 0:
            u = rng.random() * pool.total
            i = bisect.bisect_right(pool.cumulative, u)
            if i >= n or i in taken or pool.actions[i].stake <= 0.0:
                continue
            chosen.append(i)
            taken.add(i)
            positive_left -= 1
    while len(chosen) < n_select:
        i = rng.randrange(n)
        if i in taken:
            continue
        chosen.append(i)
        taken.add(i)
    return chosen


def choose_ratings(
    agent: Agent,
    visible: Sequence[Action] | RatingPool,
    k: int,
    rng: Random,
    config: PolicyConfig,
    *,
    stage: StageIndex,
    shocks: Sequence[float],
    fee: float = 0.0,
    available: float | None = None,
) -> list[Rating]:
    """Rate up to k other agents' actions, splitting the rating budget evenly.

    Target selection is stake-proportional without replacement when consumer
    selection is on (uniform fallback once no positively staked eligible
    action remains), uniform otherwise. Each rating stakes
    ``staking_rate_rating * balance / k``, capped so that total stakes plus
    fees never exceed ``available`` (the balance not already committed this
    stage). Sign is agreement between the action's direction and the
    rater's own read of the same treatment under the same stage shock.
    """
    if k <= 0:
        return []
    pool = visible if isinstance(visible, RatingPool) else RatingPool(visible)
    own = set(pool.by_actor.get(agent.id, ()))
    eligible = len(pool.actions) - len(own)
    n_select = min(k, eligible)
    if n_select <= 0:
        return []

    if available is None:
        available = agent.balance
    budget = agent.staking_rate_rating * agent.balance
    cap = available - n_select * fee
    if budget > cap:
        budget = cap
    per_stake = budget / k
    if per_stake <= 0.0:
        return []

    targets = _select_targets(pool, own, n_select, rng, config.consumer_selection)
    ratings = []
    for i in targets:
        action = pool.actions[i]
        endorse = assess_endorse(
            agent, config.treatment_quality[action.treatment],
            shocks[action.treatment], rng, config.sign_model)
        agrees = endorse == (action.direction is Direction.ENDORSE)
        ratings.append(Rating(
            rater=agent.id,
            target_action=action.id,
            stage=stage,
            signed_stake=per_stake if agrees else -per_stake,
        ))
    return ratings


def update_staking_policy(
    agent: Agent,
    outcome: StageOutcome,
    config: PolicyConfig,
) -> Agent:
    """Adjust staking rates by the sign of the realized components (learning only)."""
    if config.mode is not Mode.LEARNING:
        return agent
    lo, hi = config.staking_rate_bounds
    eta = config.learning_rate
    if outcome.delta_action > 0.0:
        agent.staking_rate_action = min(hi, agent.staking_rate_action * (1.0 + eta))
    elif outcome.delta_action < 0.0:
        agent.staking_rate_action = max(lo, agent.staking_rate_action * (1.0 - eta))
    if outcome.delta_rating > 0.0:
        agent.staking_rate_rating = min(hi, agent.staking_rate_rating * (1.0 + eta))
    elif outcome.delta_rating < 0.0:
        agent.staking_rate_rating = max(lo, agent.staking_rate_rating * (1.0 - eta))
    return agent
