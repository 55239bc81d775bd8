"""
Command line front end.

    python -m app <experiment> --config FILE [--seed N] [--threads N] [--out DIR] [--verbose]

Exit codes: 0 consistent/pass, 1 execution or config error, 2 inconsistent/fail,
3 inconclusive.
"""
import argparse
import logging
import sys
from pathlib import Path

import sentry_sdk

from app import __version__
from app.config import settings
from app.core.errors import ConfigError, SubdiffusionError
from app.core.export_service import TOOL_NAME
from app.schemas.experiment import ExperimentConfig
from app.services import config_service, experiment_service

logger = logging.getLogger(__name__)

EXPERIMENTS = {
    "simulate": "simulate coupled paths and the time-changed process",
    "occupation": "occupation fraction and hit probability of a target set",
    "growth": "log-log growth exponents of H, sigma1(H) and sigma2",
    "regime": "predict the localization regime and test it by simulation",
    "pde": "solve the variable-order fractional diffusion equation",
    "validate": "run the oracle suite",
    "compare": "Monte Carlo against the PDE solution",
}
_NOISY_LOGGERS = ("urllib3", "asyncio", "sentry_sdk")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=TOOL_NAME, description="Variable-order subdiffusion laboratory")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="experiment")
    for name, help_text in EXPERIMENTS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, type=Path, help="experiment YAML file")
        p.add_argument("--seed", type=int, help="override sim.seed")
        p.add_argument("--threads", type=int, help="worker threads (default: $SUBDIFF_THREADS)")
        p.add_argument("--out", help="output directory")
        p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def configure_logging(verbose: bool = False) -> None:
    level = logging.DEBUG if verbose else getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    for name in _NOISY_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)


def _resolve(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    if args.threads is not None:
        threads = args.threads
    elif "threads" in cfg.model_fields_set:
        threads = cfg.threads
    else:
        threads = settings.SUBDIFF_THREADS
    if threads < 1:
        raise ConfigError("thread count must be at least 1", key="threads")
    out = args.out
    if out is None and "directory" not in cfg.output.model_fields_set:
        out = settings.SUBDIFF_OUTPUT_DIR
    return config_service.apply_overrides(cfg, seed=args.seed, threads=threads, out=out)


def _print_summary(cfg: ExperimentConfig, result: experiment_service.ExperimentResult) -> None:
    print(f"{TOOL_NAME} {__version__} | {cfg.experiment} '{cfg.label}' | config {experiment_service.experiment_hash(cfg)[:12]}")
    for line in result.summary:
        print(f"  {line}")
    if result.verdict:
        print(f"verdict: {result.verdict}")
    for path in result.artifacts:
        print(f"wrote {path}")
    print(f"exit {result.exit_code}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    if settings.SENTRY_DSN:
        sentry_sdk.init(dsn=settings.SENTRY_DSN)

    try:
        cfg = config_service.load_config(args.config)
        if cfg.experiment != args.command:
            raise ConfigError(
                f"config describes a '{cfg.experiment}' experiment, not '{args.command}'", key="experiment"
            )
        cfg = _resolve(cfg, args)
        result = experiment_service.run_experiment(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return experiment_service.EXIT_ERROR
    except SubdiffusionError as e:
        logger.error("%s failed: %s: %s", args.command, type(e).__name__, e)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return experiment_service.EXIT_ERROR

    _print_summary(cfg, result)
    return result.exit_code
