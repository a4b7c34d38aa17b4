"""File formats for run outputs, and audit verification of a finished run.

A run directory holds exactly three files:

* ``trace.csv``    — header ``replicate,stage,agent,balance,delta_action,
  delta_rating,delta_total,staking_rate_action``; rows ordered by
  (replicate, stage, agent); floats rendered with Python's shortest
  round-trip repr (deterministic, value-exact).
* ``metadata.json`` — config echo, PRNG id, code version, per-replicate
  chain head hashes. No timestamps: reruns are byte-identical.
* ``catalogue.csv`` — ``treatment,score_mean,score_sd,acceptance_rate,included``.

Verification re-executes the simulation from the config echo (runs are
deterministic, so the rerun is a complete oracle), byte-compares the stored
trace, checks the recorded chain heads, re-verifies every ledger's hash
chain, and replays balances from deltas and fees. Any single-cell mutation
of the trace therefore surfaces as a located inconsistency.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .catalogue import CatalogueDecision, aggregate_scores, decide_catalogue
from .config import config_from_dict, config_to_dict
from .harness import (
    PRNG_ID,
    RunTrace,
    SweepResult,
    SimConfig,
    replay_balances,
    run_simulation,
    SWEEP_HEADER,
    TRACE_HEADER,
)

__all__ = [
    "render_trace_csv",
    "render_catalogue_csv",
    "render_sweep_csv",
    "run_metadata",
    "write_run_outputs",
    "write_sweep_outputs",
    "VerifyReport",
    "verify_run_dir",
]

log = logging.getLogger(__name__)

TRACE_FILE = "trace.csv"
METADATA_FILE = "metadata.json"
CATALOGUE_FILE = "catalogue.csv"
SWEEP_FILE = "sweep.csv"


def _fmt(value) -> str:
    # shortest round-trip float repr; normalizes -0.0 and numpy scalars
    if isinstance(value, float):
        value = float(value)
        if value == 0.0:
            value = 0.0
        return repr(value)
    return str(value)


def render_trace_csv(trace: RunTrace) -> str:
    lines = [",".join(TRACE_HEADER)]
    lines.extend(",".join(map(_fmt, row)) for row in trace.iter_agent_rows())
    return "\n".join(lines) + "\n"


def render_catalogue_csv(decisions: list[CatalogueDecision]) -> str:
    lines = ["treatment,score_mean,score_sd,acceptance_rate,included"]
    for d in decisions:
        lines.append(",".join((
            str(d.treatment),
            _fmt(d.score),
            _fmt(d.dispersion),
            _fmt(d.acceptance_rate),
            "true" if d.included else "false",
        )))
    return "\n".join(lines) + "\n"


def render_sweep_csv(result: SweepResult) -> str:
    lines = [",".join(SWEEP_HEADER)]
    lines.extend(",".join(map(_fmt, row)) for row in result.iter_csv_rows())
    return "\n".join(lines) + "\n"


def run_metadata(trace: RunTrace) -> dict:
    return {
        "config": config_to_dict(trace.config),
        "prng_id": trace.prng_id,
        "code_version": trace.code_version,
        "chain_heads": trace.chain_heads(),
    }


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def write_run_outputs(trace: RunTrace, out_dir: str | Path,
                      threshold: float | None = None) -> list[Path]:
    """Write trace.csv, metadata.json, catalogue.csv; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if threshold is None:
        threshold = trace.config.catalogue_threshold
    decisions = decide_catalogue(aggregate_scores(trace), threshold)
    paths = [out / TRACE_FILE, out / METADATA_FILE, out / CATALOGUE_FILE]
    paths[0].write_text(render_trace_csv(trace), encoding="utf-8")
    _write_json(paths[1], run_metadata(trace))
    paths[2].write_text(render_catalogue_csv(decisions), encoding="utf-8")
    log.info("wrote %s, %s, %s", *paths)
    return paths


def write_sweep_outputs(result: SweepResult, config: SimConfig,
                        out_dir: str | Path) -> list[Path]:
    """Write sweep.csv plus a metadata echo of how it was produced."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / SWEEP_FILE, out / METADATA_FILE]
    paths[0].write_text(render_sweep_csv(result), encoding="utf-8")
    _write_json(paths[1], {
        "config": config_to_dict(config),
        "grid": list(result.grid),
        "mode": result.mode.value,
        "prng_id": PRNG_ID,
        "summary": [
            {"rate": s.rate,
             "mean_cumulative_delta": s.mean_cumulative_delta,
             "dispersion": s.dispersion}
            for s in result.summary
        ],
        "spearman_by_replicate": result.spearman_by_replicate,
    })
    log.info("wrote %s, %s", *paths)
    return paths


# --- verification ------------------------------------------------------------

@dataclass(frozen=True)
class VerifyReport:
    exit_code: int  # 0 consistent, 1 unusable inputs, 3 inconsistency found
    message: str

    @property
    def ok(self) -> bool:
        return self.exit_code == 0


def _locate(line_index: int, trace: RunTrace) -> str:
    """Map a 0-based data-row index to (replicate, stage) for reporting."""
    per_rep = trace.config.n_rounds * trace.config.n_agents
    replicate = line_index // per_rep
    stage = (line_index % per_rep) // trace.config.n_agents
    return f"replicate {replicate}, stage {stage}"


def verify_run_dir(run_dir: str | Path, *, threads: int = 1) -> VerifyReport:
    """Re-derive a run directory from its metadata and audit every artifact."""
    run_dir = Path(run_dir)
    meta_path = run_dir / METADATA_FILE
    if not meta_path.is_file():
        return VerifyReport(1, f"missing metadata: {meta_path}")
    try:
        metadata = json.loads(meta_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        return VerifyReport(1, f"unreadable metadata: {exc}")
    trace_path = run_dir / TRACE_FILE
    if not trace_path.is_file():
        return VerifyReport(1, f"missing trace: {trace_path}")
    if not isinstance(metadata, dict) or "config" not in metadata:
        return VerifyReport(1, "metadata has no config echo")
    try:
        config = config_from_dict(metadata["config"])
    except Exception as exc:
        return VerifyReport(1, f"invalid config echo: {exc}")

    trace = run_simulation(config, threads=threads)

    stored = trace_path.read_text(encoding="utf-8").splitlines()
    expected = render_trace_csv(trace).splitlines()
    if stored and stored[0] != expected[0]:
        return VerifyReport(3, "trace.csv header does not match")
    for i, (exp, got) in enumerate(zip(expected[1:], stored[1:])):
        if exp != got:
            return VerifyReport(
                3, f"trace.csv row mismatch at {_locate(i, trace)}: "
                   f"expected {exp!r}, found {got!r}")
    if len(stored) != len(expected):
        return VerifyReport(
            3, f"trace.csv row count mismatch: expected {len(expected) - 1} "
               f"data rows, found {len(stored) - 1}")

    heads = metadata.get("chain_heads")
    if heads != trace.chain_heads():
        return VerifyReport(3, "recorded chain heads do not match recomputation")
    for rep in trace.replicates:
        check = rep.ledger.verify_chain()
        if not check.valid:
            return VerifyReport(
                3, f"hash chain invalid at replicate {rep.replicate}, "
                   f"stage {check.first_bad_stage}")
        err = replay_balances(rep)
        if err > 1e-9:
            return VerifyReport(
                3, f"balance replay error {err:g} at replicate {rep.replicate}")
    return VerifyReport(0, "run directory verified: trace, chain heads, "
                           "hash chains, and balance replay all consistent")
