"""
Command-line entry point: python -m src.core.main <subcommand> ...
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from src.context_logger import setup_logging
from src.core.config import Config
from src.experiments.runners import run_experiment
from src.models.experiment_config import FieldConfig, load_config
from src.models.params import ModelParams, make_drift
from src.sheq.errors import ConfigError, DomainError, SheqError
from src.sheq.field_sim import simulate_field
from src.sheq.gaussian_sim import SeedSpec, build_temporal_covariance, sample_path
from src.sheq.kernel import increment_cov_matrix
from src.sheq.wick_oracle import asymptotic_constants, expected_quartic, variance_quartic
from src.utils.tools import constants_table, oracle_table, print_table, report_table

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

SCHEMA_NOTE = f"Experiment config files use schema version {Config.SCHEMA_VERSION} (see README)."

# CLI flag -> ExperimentConfig field
OVERRIDES = {
    "theta": "theta",
    "N": "n_values",
    "M": "replicates",
    "seed": "master_seed",
    "gamma": "gammas",
    "out": "output",
    "workers": "workers",
}


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {text}")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must lie in [0, 2^64), got {text}")
    return value


def _config_overrides(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("overrides (take precedence over the config file)")
    group.add_argument("--theta", type=float, help="viscosity parameter")
    group.add_argument("--N", type=int, action="append", help="observation count; repeat for several")
    group.add_argument("--M", type=int, help="Monte Carlo replicates")
    group.add_argument("--seed", type=int, help="master seed")
    group.add_argument("--gamma", type=float, action="append", help="index exponent; repeat for several")
    group.add_argument("--out", help="report path; writes <out>.csv and <out>.json")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0, help="repeat for DEBUG logging")
    common.add_argument("--workers", type=_positive_int, help=f"parallel workers (default SHEQ_WORKERS={Config.WORKERS})")

    parser = argparse.ArgumentParser(
        prog="sheq",
        description="Quartic variation of the stochastic heat equation: oracles, simulation and experiments.",
        epilog=SCHEMA_NOTE,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run an experiment config", epilog=SCHEMA_NOTE)
    run.add_argument("config", type=Path)
    _config_overrides(run)

    check = sub.add_parser(
        "validate-config", parents=[common], help="validate a config without running it", epilog=SCHEMA_NOTE
    )
    check.add_argument("config", type=Path)
    _config_overrides(check)

    oracle = sub.add_parser("oracle", parents=[common], help="exact E V_N and Var V_N", epilog=SCHEMA_NOTE)
    oracle.add_argument("--theta", type=_positive_float, required=True)
    oracle.add_argument("--N", type=_positive_int, action="append", required=True)

    simulate = sub.add_parser("simulate", parents=[common], help="write one path as t,value CSV", epilog=SCHEMA_NOTE)
    simulate.add_argument("--theta", type=_positive_float, required=True)
    simulate.add_argument("--N", type=_positive_int, required=True)
    simulate.add_argument("--seed", type=_seed, default=Config.DEFAULT_SEED)
    simulate.add_argument("--replicate", type=int, default=0)
    simulate.add_argument("--kind", choices=["exact", "scheme"], default="exact")
    simulate.add_argument("--drift", default="zero", help="zero, linear, cosine or bounded_rational")
    simulate.add_argument("--coefficient", type=float, default=1.0, help="drift coefficient")
    simulate.add_argument("--out", type=Path, help="CSV path (default stdout)")

    constants = sub.add_parser("constants", parents=[common], help="limit and limiting variances", epilog=SCHEMA_NOTE)
    constants.add_argument("--theta", type=_positive_float, required=True)
    return parser


def _collect_overrides(args: argparse.Namespace) -> dict:
    return {field: getattr(args, flag) for flag, field in OVERRIDES.items() if getattr(args, flag, None) is not None}


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config, _collect_overrides(args))
    report = run_experiment(config, workers=args.workers)
    if config.output is None:
        sys.stdout.write(report.to_csv())
    print_table(report_table(report), stderr=True)
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    config = load_config(args.config, _collect_overrides(args))
    sys.stdout.write(json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _cmd_oracle(args: argparse.Namespace) -> int:
    rows = []
    for N in args.N:
        C = increment_cov_matrix(N, args.theta)
        rows.append((N, expected_quartic(C), variance_quartic(C)))
    print_table(oracle_table(rows, asymptotic_constants(args.theta)))
    return EXIT_OK


def _cmd_simulate(args: argparse.Namespace) -> int:
    try:
        drift = make_drift(args.drift, args.coefficient)
    except DomainError as e:
        raise ConfigError(f"drift: {e}", field="drift") from e
    seed = SeedSpec(args.seed, args.replicate)
    if args.kind == "exact":
        if not drift.is_zero:
            raise ConfigError("drift: exact simulation covers the linear model only, use --kind scheme", field="drift")
        if args.N > Config.MAX_N:
            raise ConfigError(f"N: {args.N} exceeds the exact-sampling cap {Config.MAX_N} (set SHEQ_MAX_N)", field="N")
        path = sample_path(build_temporal_covariance(args.N, args.theta), seed)
    else:
        spec = FieldConfig().grid_spec(args.N)
        path = simulate_field(spec, ModelParams(theta=args.theta, drift=drift), seed)

    lines = ["t,value"] + [f"{t:.17g},{v:.17g}" for t, v in zip(path.grid.times, path.values, strict=True)]
    text = "\n".join(lines) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="utf-8")
        logger.info("Path written", extra={"path": str(args.out), "N": args.N, "kind": args.kind})
    return EXIT_OK


def _cmd_constants(args: argparse.Namespace) -> int:
    print_table(constants_table(asymptotic_constants(args.theta)))
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "validate-config": _cmd_validate,
    "oracle": _cmd_oracle,
    "simulate": _cmd_simulate,
    "constants": _cmd_constants,
}


def _report_error(kind: str, message: str, field: str | None = None):
    payload = {"error": kind, "message": message}
    if field is not None:
        payload["field"] = field
    sys.stderr.write(json.dumps(payload) + "\n")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(log_level="DEBUG" if args.verbose else Config.LOG_LEVEL, log_dir=Config.LOG_DIR)
    try:
        Config.validate()
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error("Invalid configuration", extra={"field": e.field})
        _report_error("ConfigError", str(e), e.field)
        return EXIT_CONFIG
    except (SheqError, FloatingPointError, np.linalg.LinAlgError) as e:
        logger.exception("Numerical failure")
        _report_error(type(e).__name__, str(e))
        return EXIT_NUMERICAL
    except ValueError as e:
        # environment settings rejected by Config.validate
        _report_error("ConfigError", str(e))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
