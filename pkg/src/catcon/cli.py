"""Command-line entry point.

Subcommands: run, sweep, catalogue, verify, validate-config. Every error
path prints a single machine-parsable ``error: ...`` line to stderr and
exits non-zero (1 invalid input, 2 I/O failure, 3 verification
inconsistency). Set CATCON_LOG=DEBUG|INFO|WARNING|ERROR to control logging.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from ._version import __version__
from .config import config_from_dict, default_config_dict, load_config
from .harness import (
    ConfigError,
    DEFAULT_SWEEP_GRID,
    run_simulation,
    sweep_staking_rate,
)
from .outputs import (
    METADATA_FILE,
    verify_run_dir,
    write_run_outputs,
    write_sweep_outputs,
)
from .policies import Mode

log = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catcon",
        description="Staged voting-and-reputation simulator for catalogue curation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, out_required=True):
        p.add_argument("--config", metavar="PATH",
                       help="run configuration JSON (default: packaged defaults)")
        p.add_argument("--seed", type=int, metavar="U64",
                       help="override the config seed")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                       metavar="N", help="parallel replicate workers "
                       "(results are identical for any value)")
        if out_required:
            p.add_argument("--out", required=True, metavar="DIR",
                           help="output directory")

    p_run = sub.add_parser("run", help="run a simulation and write its outputs")
    add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="staking-rate sweep (figure data)")
    add_common(p_sweep)
    p_sweep.add_argument("--grid", metavar="LIST",
                         default=",".join(str(g) for g in DEFAULT_SWEEP_GRID),
                         help="comma-separated staking rates in [0, 1]")
    p_sweep.add_argument("--mode", choices=["learning", "nonlearning"],
                         help="override the config policy mode")

    p_cat = sub.add_parser("catalogue",
                           help="recompute catalogue.csv for a run directory")
    p_cat.add_argument("trace_dir", metavar="TRACE_DIR")
    p_cat.add_argument("--threshold", type=float, metavar="X",
                       help="override the inclusion threshold")
    p_cat.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                       metavar="N")

    p_verify = sub.add_parser("verify", help="audit a run directory")
    p_verify.add_argument("trace_dir", metavar="TRACE_DIR")
    p_verify.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                          metavar="N")

    p_val = sub.add_parser("validate-config", help="check a configuration file")
    p_val.add_argument("--config", required=True, metavar="PATH")
    return parser


def _load_config(args) -> "SimConfig":
    if getattr(args, "config", None):
        config = load_config(args.config)
    else:
        config = config_from_dict(default_config_dict())
    if getattr(args, "seed", None) is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")
        config.seed = args.seed
        config.validate()
    return config


def _parse_grid(spec: str) -> list[float]:
    try:
        grid = [float(part) for part in spec.split(",") if part.strip() != ""]
    except ValueError:
        raise ConfigError("grid", f"not a comma-separated list of numbers: {spec!r}")
    if not grid:
        raise ConfigError("grid", "must contain at least one rate")
    for g in grid:
        if not 0.0 <= g <= 1.0:
            raise ConfigError("grid", f"rates must be in [0, 1], got {g}")
    return grid


def _cmd_run(args) -> int:
    config = _load_config(args)
    trace = run_simulation(config, threads=max(1, args.threads))
    write_run_outputs(trace, args.out)
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    grid = _parse_grid(args.grid)
    mode = Mode(args.mode) if args.mode else None
    result = sweep_staking_rate(config, grid, mode=mode,
                                threads=max(1, args.threads))
    if mode is not None:
        from dataclasses import replace
        config = replace(config, policy=replace(config.policy, mode=mode))
    write_sweep_outputs(result, config, args.out)
    return 0


def _cmd_catalogue(args) -> int:
    import json

    from .outputs import CATALOGUE_FILE, render_catalogue_csv
    from .catalogue import aggregate_scores, decide_catalogue

    meta_path = Path(args.trace_dir) / METADATA_FILE
    if not meta_path.is_file():
        print(f"error: missing metadata: {meta_path}", file=sys.stderr)
        return 1
    metadata = json.loads(meta_path.read_text(encoding="utf-8"))
    if not isinstance(metadata, dict) or "config" not in metadata:
        print("error: metadata has no config echo", file=sys.stderr)
        return 1
    config = config_from_dict(metadata["config"])
    threshold = (args.threshold if args.threshold is not None
                 else config.catalogue_threshold)
    trace = run_simulation(config, threads=max(1, args.threads))
    decisions = decide_catalogue(aggregate_scores(trace), threshold)
    out_path = Path(args.trace_dir) / CATALOGUE_FILE
    out_path.write_text(render_catalogue_csv(decisions), encoding="utf-8")
    log.info("wrote %s", out_path)
    return 0


def _cmd_verify(args) -> int:
    report = verify_run_dir(args.trace_dir, threads=max(1, args.threads))
    if report.ok:
        print(report.message)
        return 0
    print(f"error: {report.message}", file=sys.stderr)
    return report.exit_code


def _cmd_validate_config(args) -> int:
    load_config(args.config)
    print("ok")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "catalogue": _cmd_catalogue,
    "verify": _cmd_verify,
    "validate-config": _cmd_validate_config,
}


def main(argv: list[str] | None = None) -> int:
    level_name = os.environ.get("CATCON_LOG", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
