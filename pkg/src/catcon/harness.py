"""Staged Monte Carlo engine: replicates, per-round settlement, sweeps.

One round: every agent independently decides whether to participate; the
participating actors each stake an endorsement of one treatment; the
participating raters each stake signed ratings of up to k other agents'
visible actions; the stage settles in one shot; the ledger applies the
outcomes; learning-mode agents then adjust their staking rates.

Reproducibility: every random draw comes from a named substream derived by
hashing (seed, label, indices). Population initialization uses the
``pop`` streams, per-agent stage behavior the ``agent`` streams, and
per-stage treatment shocks the ``shock`` stream of each replicate. With
``shared_population`` (the default) the population draws do not involve the
replicate index, so replicates vote with the same panel of doctors and
cross-replicate statistics isolate the variability of the voting process
itself. Replicates are otherwise fully independent and can run in any
order or in parallel without changing their traces.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from random import Random
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy import stats

from ._version import __version__
from .catalogue import action_score_contribution
from .core import (
    Action,
    Agent,
    AgentId,
    CreditLedger,
    Direction,
    Rating,
    Role,
    StageIndex,
    StageRecord,
    TreatmentId,
)
from .policies import (
    Mode,
    PolicyConfig,
    RatingPool,
    choose_action,
    choose_ratings,
    decide_participation,
    update_staking_policy,
)
from .settlement import StageSubmissions, settle_stage

__all__ = [
    "ConfigError",
    "BalanceSpec",
    "SimConfig",
    "ReplicateTrace",
    "RunTrace",
    "SweepResult",
    "run_simulation",
    "sweep_staking_rate",
    "replay_balances",
    "TRACE_HEADER",
    "SWEEP_HEADER",
    "PRNG_ID",
    "DEFAULT_SWEEP_GRID",
]

PRNG_ID = "python-mt19937/sha256-path-substreams/v1"

TRACE_HEADER = ("replicate", "stage", "agent", "balance", "delta_action",
                "delta_rating", "delta_total", "staking_rate_action")
SWEEP_HEADER = ("rate", "agent", "cumulative_delta", "mode")

DEFAULT_SWEEP_GRID = (0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95)

_ACTIVE_ROLES = frozenset({Role.C1_ACTOR, Role.C2_RATER})
_INVESTOR_ROLES = frozenset({Role.C3_INVESTOR})


class ConfigError(ValueError):
    """Invalid run configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


# --- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class BalanceSpec:
    """Initial credit distribution: constant(value) or uniform(low, high)."""

    kind: str = "uniform"
    value: float = 100.0
    low: float = 50.0
    high: float = 150.0

    def validate(self, prefix: str = "initial_balance") -> None:
        if self.kind not in ("constant", "uniform"):
            raise ConfigError(f"{prefix}.kind",
                              f"must be 'constant' or 'uniform', got {self.kind!r}")
        if self.kind == "constant" and self.value < 0:
            raise ConfigError(f"{prefix}.value", "must be >= 0")
        if self.kind == "uniform":
            if self.low < 0:
                raise ConfigError(f"{prefix}.low", "must be >= 0")
            if self.low > self.high:
                raise ConfigError(f"{prefix}.low",
                                  f"must be <= high ({self.low} > {self.high})")

    def draw(self, rng: Random) -> float:
        if self.kind == "constant":
            return self.value
        return rng.uniform(self.low, self.high)


@dataclass
class SimConfig:
    """Full parameterization of a run. Immutable by convention once validated."""

    n_agents: int = 100
    n_rounds: int = 500
    n_treatments: int = 5
    initial_balance: BalanceSpec = field(default_factory=BalanceSpec)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    fee: float = 0.0
    seed: int = 42
    n_replicates: int = 1
    coefficient_scope: str = "per_agent"
    n_investors: int = 0
    catalogue_threshold: float = 0.0
    shared_population: bool = True

    def validate(self) -> None:
        if self.n_agents < 2:
            raise ConfigError("n_agents", f"must be >= 2, got {self.n_agents}")
        if self.n_rounds < 1:
            raise ConfigError("n_rounds", f"must be >= 1, got {self.n_rounds}")
        if self.n_treatments < 1:
            raise ConfigError("n_treatments",
                              f"must be >= 1, got {self.n_treatments}")
        if self.n_replicates < 1:
            raise ConfigError("n_replicates",
                              f"must be >= 1, got {self.n_replicates}")
        if self.fee < 0:
            raise ConfigError("fee", f"must be >= 0, got {self.fee}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")
        if self.coefficient_scope != "per_agent":
            raise ConfigError(
                "coefficient_scope",
                f"only 'per_agent' is implemented ('global' is reserved), "
                f"got {self.coefficient_scope!r}")
        if not 0 <= self.n_investors <= self.n_agents - 2:
            raise ConfigError(
                "n_investors",
                f"must leave at least 2 active agents, got {self.n_investors}")
        if not np.isfinite(self.catalogue_threshold):
            raise ConfigError("catalogue_threshold", "must be finite")
        self.initial_balance.validate()
        try:
            self.policy.__post_init__()
        except ValueError as exc:
            raise ConfigError("policy", str(exc)) from exc
        missing = [t for t in range(self.n_treatments)
                   if t not in self.policy.treatment_quality]
        if missing:
            raise ConfigError(
                "policy.treatment_quality",
                f"missing quality for treatment(s) {missing}")


# --- PRNG substreams ---------------------------------------------------------

def derive_stream(seed: int, *path: object) -> Random:
    """Named substream: MT19937 seeded from SHA-256 of (seed, path)."""
    h = hashlib.sha256()
    h.update(b"catcon.rng.v1")
    h.update(int(seed).to_bytes(8, "little"))
    for part in path:
        h.update(b"/")
        h.update(str(part).encode("utf-8"))
    return Random(int.from_bytes(h.digest()[:8], "little"))


# --- traces ------------------------------------------------------------------

@dataclass
class ReplicateTrace:
    """Recorded output of one replicate.

    Per-agent rows are flat arrays of length n_rounds * n_agents indexed by
    ``stage * n_agents + agent``; per-treatment cumulative scores are flat
    arrays of length n_rounds * n_treatments indexed analogously. Action
    events carry (stage, actor, treatment, direction +/-1, stake) per
    submitted action.
    """

    replicate: int
    n_agents: int
    n_treatments: int
    initial_balances: np.ndarray
    balance: np.ndarray
    delta_action: np.ndarray
    delta_rating: np.ndarray
    delta_total: np.ndarray
    staking_rate_action: np.ndarray
    treatment_cumulative: np.ndarray
    ev_stage: np.ndarray
    ev_actor: np.ndarray
    ev_treatment: np.ndarray
    ev_direction: np.ndarray
    ev_stake: np.ndarray
    ledger: CreditLedger
    final_agents: list[Agent]

    @property
    def n_stages(self) -> int:
        return len(self.balance) // self.n_agents


@dataclass
class RunTrace:
    """All replicates of a run, in replicate-index order, plus provenance."""

    config: SimConfig
    replicates: list[ReplicateTrace]
    prng_id: str = PRNG_ID
    code_version: str = __version__

    def chain_heads(self) -> list[str]:
        return [rep.ledger.head_hash.hex() for rep in self.replicates]

    def iter_agent_rows(self) -> Iterator[tuple]:
        """Rows in (replicate, stage, agent) order matching TRACE_HEADER."""
        for rep in self.replicates:
            n = rep.n_agents
            for stage in range(rep.n_stages):
                base = stage * n
                for agent in range(n):
                    i = base + agent
                    yield (rep.replicate, stage, agent,
                           rep.balance[i], rep.delta_action[i],
                           rep.delta_rating[i], rep.delta_total[i],
                           rep.staking_rate_action[i])


# --- the engine --------------------------------------------------------------

class Replicate:
    """Sequential stage loop for one replicate; single writer of its ledger."""

    def __init__(self, config: SimConfig, replicate: int,
                 rate_grid: Sequence[float] | None = None):
        self.config = config
        self.replicate = replicate
        self.stage: StageIndex = 0
        pop_path = ("pop",) if config.shared_population else ("pop", replicate)
        n_active = config.n_agents - config.n_investors
        lo, hi = config.policy.staking_rate_bounds
        elo, ehi = config.policy.expertise_bounds
        self.agents: list[Agent] = []
        for i in range(config.n_agents):
            rng = derive_stream(config.seed, *pop_path, i)
            balance = config.initial_balance.draw(rng)
            rate_a = rng.uniform(lo, hi)
            rate_r = rng.uniform(lo, hi)
            expertise = rng.uniform(elo, ehi)
            if rate_grid is not None and i < n_active:
                rate_a = rate_grid[i % len(rate_grid)]
            self.agents.append(Agent(
                id=i,
                roles=_ACTIVE_ROLES if i < n_active else _INVESTOR_ROLES,
                balance=balance,
                staking_rate_action=rate_a,
                staking_rate_rating=rate_r,
                skip_probability=config.policy.skip_probability,
                expertise=expertise,
            ))
        self.assigned_rates = [a.staking_rate_action for a in self.agents]
        self.ledger = CreditLedger({a.id: a.balance for a in self.agents})
        self.rng_agents = [derive_stream(config.seed, "agent", replicate, i)
                           for i in range(config.n_agents)]
        self.rng_shock = derive_stream(config.seed, "shock", replicate)
        self.treatments: list[TreatmentId] = list(range(config.n_treatments))

        n_rows = config.n_rounds * config.n_agents
        self._balance = np.empty(n_rows)
        self._delta_action = np.empty(n_rows)
        self._delta_rating = np.empty(n_rows)
        self._delta_total = np.empty(n_rows)
        self._rate_action = np.empty(n_rows)
        self._treatment_cum = np.empty(config.n_rounds * config.n_treatments)
        self._cum_scores = [0.0] * config.n_treatments
        self._ev_stage: list[int] = []
        self._ev_actor: list[int] = []
        self._ev_treatment: list[int] = []
        self._ev_direction: list[int] = []
        self._ev_stake: list[float] = []
        self.last_submissions: StageSubmissions | None = None

    def step(self, submissions: StageSubmissions | None = None) -> StageRecord:
        """Run one stage; optionally inject prebuilt submissions (tests)."""
        config = self.config
        stage = self.stage
        n = config.n_agents
        policy = config.policy
        fee = config.fee

        shock = policy.quality_shock
        shocks = [self.rng_shock.uniform(-shock, shock) if shock > 0.0 else 0.0
                  for _ in range(config.n_treatments)]

        rates_used = [a.staking_rate_action for a in self.agents]
        fees: dict[AgentId, float] = {}

        if submissions is None:
            actions: list[Action] = []
            committed: dict[AgentId, float] = {}
            participating: list[Agent] = []
            for agent in self.agents:
                if not agent.roles & _ACTIVE_ROLES:
                    continue
                if not decide_participation(agent, self.rng_agents[agent.id]):
                    continue
                participating.append(agent)
                if agent.is_actor:
                    action = choose_action(
                        agent, self.treatments, self.rng_agents[agent.id],
                        policy, stage=stage, action_id=stage * n + agent.id,
                        shocks=shocks, fee=fee)
                    if action is not None:
                        actions.append(action)
                        committed[agent.id] = action.stake + fee
                        if fee:
                            fees[agent.id] = fee
            pool = RatingPool(actions)
            ratings: list[Rating] = []
            for agent in participating:
                if not agent.is_rater:
                    continue
                available = agent.balance - committed.get(agent.id, 0.0)
                agent_ratings = choose_ratings(
                    agent, pool, policy.ratings_per_rater,
                    self.rng_agents[agent.id], policy, stage=stage,
                    shocks=shocks, fee=fee, available=available)
                if agent_ratings:
                    ratings.extend(agent_ratings)
                    if fee:
                        fees[agent.id] = fees.get(agent.id, 0.0) \
                            + fee * len(agent_ratings)
            submissions = StageSubmissions(stage, actions, ratings)
        self.last_submissions = submissions

        outcomes = settle_stage(submissions)
        record = self.ledger.apply(stage, outcomes, fees)

        for agent in self.agents:
            agent.balance = self.ledger.balances[agent.id]
        if policy.mode is Mode.LEARNING:
            for agent in self.agents:
                outcome = outcomes.get(agent.id)
                if outcome is not None:
                    update_staking_policy(agent, outcome, policy)

        base = stage * n
        for agent in self.agents:
            i = base + agent.id
            outcome = outcomes.get(agent.id)
            self._balance[i] = agent.balance
            self._delta_action[i] = outcome.delta_action if outcome else 0.0
            self._delta_rating[i] = outcome.delta_rating if outcome else 0.0
            self._delta_total[i] = outcome.delta_total if outcome else 0.0
            self._rate_action[i] = rates_used[agent.id]

        for action in submissions.actions:
            outcome = outcomes.get(action.actor)
            delta = outcome.delta_action if outcome else 0.0
            sign = 1.0 if action.direction is Direction.ENDORSE else -1.0
            self._cum_scores[action.treatment] += action_score_contribution(
                sign, action.stake, delta)
            self._ev_stage.append(stage)
            self._ev_actor.append(action.actor)
            self._ev_treatment.append(action.treatment)
            self._ev_direction.append(1 if sign > 0 else -1)
            self._ev_stake.append(action.stake)
        tbase = stage * config.n_treatments
        for t in range(config.n_treatments):
            self._treatment_cum[tbase + t] = self._cum_scores[t]

        self.stage += 1
        return record

    def run(self) -> ReplicateTrace:
        initial = np.array([self.ledger.balances[a.id] for a in self.agents])
        for _ in range(self.config.n_rounds):
            self.step()
        return ReplicateTrace(
            replicate=self.replicate,
            n_agents=self.config.n_agents,
            n_treatments=self.config.n_treatments,
            initial_balances=initial,
            balance=self._balance,
            delta_action=self._delta_action,
            delta_rating=self._delta_rating,
            delta_total=self._delta_total,
            staking_rate_action=self._rate_action,
            treatment_cumulative=self._treatment_cum,
            ev_stage=np.array(self._ev_stage, dtype=np.int64),
            ev_actor=np.array(self._ev_actor, dtype=np.int64),
            ev_treatment=np.array(self._ev_treatment, dtype=np.int64),
            ev_direction=np.array(self._ev_direction, dtype=np.float64),
            ev_stake=np.array(self._ev_stake, dtype=np.float64),
            ledger=self.ledger,
            final_agents=self.agents,
        )


def _run_replicate(args: tuple[SimConfig, int, tuple[float, ...] | None]
                   ) -> ReplicateTrace:
    config, replicate, rate_grid = args
    return Replicate(config, replicate, rate_grid=rate_grid).run()


def _map_replicates(config: SimConfig, threads: int,
                    rate_grid: tuple[float, ...] | None,
                    consume: Callable | None = None) -> list:
    """Run all replicates, merging results in replicate-index order."""
    jobs = [(config, r, rate_grid) for r in range(config.n_replicates)]
    post = consume if consume is not None else (lambda rep: rep)
    if threads > 1 and config.n_replicates > 1:
        with ProcessPoolExecutor(max_workers=min(threads, config.n_replicates)) as pool:
            return [post(rep) for rep in pool.map(_run_replicate, jobs)]
    return [post(_run_replicate(job)) for job in jobs]


def run_simulation(config: SimConfig, *, threads: int = 1) -> RunTrace:
    """Run every replicate of the configured experiment; full trace kept."""
    config.validate()
    replicates = _map_replicates(config, threads, None)
    return RunTrace(config=config, replicates=replicates)


# --- staking-rate sweep ------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    replicate: int
    rate: float              # assigned rate (nonlearning) or realized final rate
    agent: AgentId
    cumulative_delta: float  # cumulative action-derived credit change


@dataclass(frozen=True)
class SweepSummary:
    rate: float
    mean_cumulative_delta: float
    dispersion: float


@dataclass
class SweepResult:
    mode: Mode
    grid: tuple[float, ...]
    rows: list[SweepRow]
    summary: list[SweepSummary]
    spearman_by_replicate: list[float]

    def iter_csv_rows(self) -> Iterator[tuple]:
        for row in self.rows:
            yield (row.rate, row.agent, row.cumulative_delta, self.mode.value)


def _sweep_replicate(args) -> tuple[list[float], list[float], list[float]]:
    """Worker: (assigned rates, scatter rates, cumulative action deltas)."""
    config, replicate, grid = args
    rep = Replicate(config, replicate, rate_grid=grid).run()
    n_active = config.n_agents - config.n_investors
    n = config.n_agents
    cum = rep.delta_action.reshape(-1, n).sum(axis=0)
    assigned = rep.staking_rate_action[:n_active].tolist()
    if config.policy.mode is Mode.LEARNING:
        scatter = [a.staking_rate_action for a in rep.final_agents[:n_active]]
    else:
        scatter = assigned
    return assigned, scatter, cum[:n_active].tolist()


def sweep_staking_rate(
    config: SimConfig,
    grid: Sequence[float] = DEFAULT_SWEEP_GRID,
    *,
    mode: Mode | None = None,
    threads: int = 1,
) -> SweepResult:
    """Measure cumulative action-derived credit change against staking rate.

    Active agents are assigned action staking rates round-robin from the
    grid (one run per replicate). Under nonlearning the rates stay fixed and
    the scatter uses the assigned rate; under learning they evolve and the
    scatter uses each agent's realized final rate. The summary groups by
    assigned grid value in both modes; the per-replicate Spearman rank
    correlation is computed on the scatter pairs.
    """
    if len(grid) == 0:
        raise ValueError("sweep grid must not be empty")
    for g in grid:
        if not 0.0 <= g <= 1.0:
            raise ValueError(f"sweep grid values must be in [0, 1], got {g}")
    if mode is not None and mode is not config.policy.mode:
        config = replace(config, policy=replace(config.policy, mode=mode))
    config.validate()
    grid_t = tuple(float(g) for g in grid)

    jobs = [(config, r, grid_t) for r in range(config.n_replicates)]
    if threads > 1 and config.n_replicates > 1:
        with ProcessPoolExecutor(max_workers=min(threads, config.n_replicates)) as pool:
            results = list(pool.map(_sweep_replicate, jobs))
    else:
        results = [_sweep_replicate(job) for job in jobs]

    rows: list[SweepRow] = []
    by_assigned: dict[float, list[float]] = {g: [] for g in grid_t}
    rhos: list[float] = []
    for replicate, (assigned, scatter, cum) in enumerate(results):
        for agent, (rate, value) in enumerate(zip(scatter, cum)):
            rows.append(SweepRow(replicate, rate, agent, value))
        for rate, value in zip(assigned, cum):
            by_assigned[rate].append(value)
        if len(set(scatter)) < 2 or len(set(cum)) < 2:
            rhos.append(float("nan"))  # rank correlation undefined
        else:
            rhos.append(float(stats.spearmanr(scatter, cum).statistic))
    summary = [
        SweepSummary(
            rate=g,
            mean_cumulative_delta=float(np.mean(vals)) if vals else 0.0,
            dispersion=float(np.std(vals)) if vals else 0.0,
        )
        for g, vals in by_assigned.items()
    ]
    return SweepResult(
        mode=config.policy.mode,
        grid=grid_t,
        rows=rows,
        summary=summary,
        spearman_by_replicate=rhos,
    )


# --- trace invariants --------------------------------------------------------

def replay_balances(rep: ReplicateTrace) -> float:
    """Replay balances from deltas, fees, and the floor rule; max abs error."""
    n = rep.n_agents
    balances = rep.initial_balances.copy()
    max_err = 0.0
    for record in rep.ledger.stage_log:
        base = record.stage * n
        for agent in range(n):
            outcome = record.outcomes.get(agent)
            delta = outcome.delta_total if outcome else 0.0
            value = balances[agent] + delta - record.fees.get(agent, 0.0)
            if value < 0.0:
                value = 0.0
            balances[agent] = value
            err = abs(value - rep.balance[base + agent])
            if err > max_err:
                max_err = err
    return max_err
