"""Turn vote history into per-treatment include/exclude decisions.

A treatment's score in one replicate is the sum over stages of each action's
signed stake (+stake endorse, -stake oppose) weighted by how the actor's
peers concurrently judged them: the factor ``(1 + clamp(delta_action, -1, 1)) / 2``
maps the actor's settled action component into [0, 1], so endorsements that
peers backed count close to full weight and contested ones are damped.
The whole rule is a deliberate artifact decision kept behind one function,
and it is a pure function of the recorded trace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import TreatmentId

__all__ = [
    "CatalogueDecision",
    "action_score_contribution",
    "aggregate_scores",
    "decide_catalogue",
]


@dataclass(frozen=True)
class CatalogueDecision:
    treatment: TreatmentId
    score: float            # mean score across replicates; decision basis
    included: bool          # score >= threshold
    acceptance_rate: float  # fraction of replicates with score >= threshold
    dispersion: float       # population sd of the score across replicates


def action_score_contribution(
    direction_sign: float, stake: float, delta_action: float
) -> float:
    """Signed stake weighted by the actor's concurrent peer-approval factor."""
    clamped = min(1.0, max(-1.0, delta_action))
    return direction_sign * stake * (1.0 + clamped) * 0.5


def aggregate_scores(trace) -> dict[TreatmentId, np.ndarray]:
    """Per-treatment array of final scores, one entry per replicate.

    Vectorized re-derivation of the per-stage increments the run records;
    the two are asserted equal in the test suite.
    """
    n_treatments = trace.config.n_treatments
    n_agents = trace.config.n_agents
    per_treatment = {
        t: np.zeros(len(trace.replicates)) for t in range(n_treatments)
    }
    for idx, rep in enumerate(trace.replicates):
        if len(rep.ev_stage) == 0:
            continue
        delta = rep.delta_action[rep.ev_stage * n_agents + rep.ev_actor]
        weight = (1.0 + np.clip(delta, -1.0, 1.0)) * 0.5
        contrib = rep.ev_direction * rep.ev_stake * weight
        totals = np.bincount(rep.ev_treatment, weights=contrib,
                             minlength=n_treatments)
        for t in range(n_treatments):
            per_treatment[t][idx] = totals[t]
    return per_treatment


def decide_catalogue(
    scores: dict[TreatmentId, np.ndarray], threshold: float
) -> list[CatalogueDecision]:
    """Threshold the mean replicate score; report cross-replicate consensus stats."""
    if not np.isfinite(threshold):
        raise ValueError(f"threshold must be finite, got {threshold}")
    decisions = []
    for treatment in sorted(scores):
        values = np.asarray(scores[treatment], dtype=float)
        mean = float(values.mean()) if values.size else 0.0
        decisions.append(CatalogueDecision(
            treatment=treatment,
            score=mean,
            included=mean >= threshold,
            acceptance_rate=float((values >= threshold).mean()) if values.size else 0.0,
            dispersion=float(values.std()) if values.size else 0.0,
        ))
    return decisions
