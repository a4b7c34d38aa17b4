"""Per-stage settlement of staked actions and ratings.

Each agent's stage outcome has two normalized components:

* action component: sum over the agent's own actions m and every rating j
  received on them of ``C_a * stake_m * signed_stake_j``, with
  ``C_a = 1 / sum |stake_m * signed_stake_j|``;
* rating component: sum over the agent's own ratings and every co-rater j
  on the same action of ``C_r * own_stake * co_stake``, with
  ``C_r = 1 / sum |own_stake * co_stake|``.

An empty denominator means coefficient 0 and component 0 (sparse stages are
normal, not an error). Both components are quotients of a signed sum by the
sum of absolute values of the same terms accumulated in the same order, so
|component| <= 1 holds exactly, also under floating point; an agent's loss
in a stage can never exceed its normalized exposure.

Reproducibility contract: all sums are accumulated in a fixed order —
actions ascending by ActionId, ratings ascending by (target ActionId,
rater AgentId) — so settlement is bit-identical across runs and platforms.
Coefficients are per agent per stage; a shared global scope is reserved in
the run config but not implemented. Stake products must stay inside the
normal double range (above ~1e-308): the reciprocal coefficient of a
subnormal denominator overflows, and the ledger refuses non-finite values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from operator import attrgetter

from .core import Action, AgentId, Rating, StageIndex, StageOutcome

__all__ = [
    "SubmissionError",
    "StageSubmissions",
    "coeff_action",
    "coeff_rating",
    "action_component",
    "rating_component",
    "settle_stage",
]


class SubmissionError(Exception):
    """A stage's submissions violate a structural invariant."""


@dataclass
class StageSubmissions:
    """Frozen snapshot of one stage's actions and ratings."""

    stage: StageIndex
    actions: list[Action] = field(default_factory=list)
    ratings: list[Rating] = field(default_factory=list)

    def validate(self, max_actions_per_agent: int = 1) -> None:
        """Check structural invariants; raises SubmissionError naming the offender."""
        by_id: dict[int, Action] = {}
        per_actor: dict[AgentId, int] = {}
        for a in self.actions:
            if a.stage != self.stage:
                raise SubmissionError(
                    f"action {a.id} is stamped for stage {a.stage}, not {self.stage}")
            if a.id in by_id:
                raise SubmissionError(f"duplicate action id {a.id}")
            by_id[a.id] = a
            per_actor[a.actor] = per_actor.get(a.actor, 0) + 1
            if per_actor[a.actor] > max_actions_per_agent:
                raise SubmissionError(
                    f"agent {a.actor} submitted more than "
                    f"{max_actions_per_agent} action(s)")
        seen_pairs: set[int] = set()  # packed (rater, target) pairs
        stage = self.stage
        for r in self.ratings:
            if r.stage != stage:
                raise SubmissionError(
                    f"rating by agent {r.rater} on action {r.target_action} is "
                    f"stamped for stage {r.stage}, not {self.stage}")
            target = by_id.get(r.target_action)
            if target is None:
                raise SubmissionError(
                    f"rating by agent {r.rater} targets unknown action "
                    f"{r.target_action}")
            if target.actor == r.rater:
                raise SubmissionError(
                    f"agent {r.rater} rated its own action {r.target_action}")
            pair = (r.rater << 32) ^ r.target_action
            if pair in seen_pairs:
                raise SubmissionError(
                    f"agent {r.rater} rated action {r.target_action} twice")
            seen_pairs.add(pair)

    def actions_by_id(self) -> dict[int, Action]:
        return {a.id: a for a in self.actions}


def _ratings_by_target(subs: StageSubmissions) -> dict[int, list[Rating]]:
    """Ratings grouped by target action, each group sorted by rater id."""
    grouped: dict[int, list[Rating]] = {}
    for r in sorted(subs.ratings, key=lambda r: (r.target_action, r.rater)):
        grouped.setdefault(r.target_action, []).append(r)
    return grouped


def _action_sums(agent: AgentId, subs: StageSubmissions) -> tuple[float, float]:
    grouped = _ratings_by_target(subs)
    num = 0.0
    den = 0.0
    for action in sorted(subs.actions, key=lambda a: a.id):
        if action.actor != agent:
            continue
        for r in grouped.get(action.id, ()):
            term = action.stake * r.signed_stake
            num += term
            den += abs(term)
    return num, den


def _rating_sums(agent: AgentId, subs: StageSubmissions) -> tuple[float, float]:
    grouped = _ratings_by_target(subs)
    num = 0.0
    den = 0.0
    for target in sorted(grouped):
        group = grouped[target]
        for own in group:
            if own.rater != agent:
                continue
            for other in group:
                if other.rater == agent:
                    continue
                term = own.signed_stake * other.signed_stake
                num += term
                den += abs(term)
    return num, den


def coeff_action(agent: AgentId, subs: StageSubmissions) -> float:
    """Normalizer over |own action stake x received rating stake| terms; 0 if empty."""
    _, den = _action_sums(agent, subs)
    return 1.0 / den if den > 0.0 else 0.0


def coeff_rating(agent: AgentId, subs: StageSubmissions) -> float:
    """Normalizer over |own rating stake x co-rater stake| terms; 0 if empty."""
    _, den = _rating_sums(agent, subs)
    return 1.0 / den if den > 0.0 else 0.0


def action_component(agent: AgentId, subs: StageSubmissions) -> float:
    """Net normalized credit change from ratings received on own actions."""
    num, den = _action_sums(agent, subs)
    return num / den if den > 0.0 else 0.0


def rating_component(agent: AgentId, subs: StageSubmissions) -> float:
    """Net normalized credit change from agreement with co-raters."""
    num, den = _rating_sums(agent, subs)
    return num / den if den > 0.0 else 0.0


def settle_stage(
    subs: StageSubmissions,
    *,
    validate: bool = True,
    max_actions_per_agent: int = 1,
) -> dict[AgentId, StageOutcome]:
    """Settle one stage; every agent appearing in the submissions gets an outcome.

    Single pass over the submissions; per-agent accumulation order matches
    the standalone component functions exactly (bitwise).
    """
    if validate:
        subs.validate(max_actions_per_agent=max_actions_per_agent)
    if not subs.actions and not subs.ratings:
        return {}

    grouped = _ratings_by_target(subs)

    num_a: dict[AgentId, float] = {}
    den_a: dict[AgentId, float] = {}
    num_r: dict[AgentId, float] = {}
    den_r: dict[AgentId, float] = {}
    participants: set[AgentId] = set()

    for action in sorted(subs.actions, key=lambda a: a.id):
        participants.add(action.actor)
        group = grouped.get(action.id)
        if not group:
            continue
        actor = action.actor
        stake = action.stake
        na = num_a.get(actor, 0.0)
        da = den_a.get(actor, 0.0)
        for r in group:
            term = stake * r.signed_stake
            na += term
            da += abs(term)
        num_a[actor] = na
        den_a[actor] = da

    for target in sorted(grouped):
        group = grouped[target]
        for own in group:
            participants.add(own.rater)
            if len(group) == 1:
                continue
            nr = num_r.get(own.rater, 0.0)
            dr = den_r.get(own.rater, 0.0)
            s = own.signed_stake
            for other in group:
                if other.rater == own.rater:
                    continue
                term = s * other.signed_stake
                nr += term
                dr += abs(term)
            num_r[own.rater] = nr
            den_r[own.rater] = dr

    outcomes: dict[AgentId, StageOutcome] = {}
    for agent in sorted(participants):
        da = den_a.get(agent, 0.0)
        dr = den_r.get(agent, 0.0)
        delta_a = num_a.get(agent, 0.0) / da if da > 0.0 else 0.0
        delta_r = num_r.get(agent, 0.0) / dr if dr > 0.0 else 0.0
        outcomes[agent] = StageOutcome(
            delta_action=delta_a,
            delta_rating=delta_r,
            delta_total=delta_a + delta_r,
            coeff_action=1.0 / da if da > 0.0 else 0.0,
            coeff_rating=1.0 / dr if dr > 0.0 else 0.0,
        )
    return outcomes
