"""
Command-line interface for dax.

Provides `run`, `check-theory` and `version` subcommands via argparse.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import __version__, config
from .errors import DaxError
from .harness import check_theory, run_experiment
from .report import (
    export_all,
    print_check_report,
    print_console_summary,
    print_trial_progress,
)
from .settings import load_config, parse_methods


def main(argv: list[str] | None = None) -> None:
    """Parse arguments and dispatch to the appropriate subcommand.

    Library errors become a one-line message on stderr and exit status 1.
    A failed theory check also exits 1; argparse usage errors exit 2.

    Args:
        argv: Command-line arguments, or None to use sys.argv.
    """
    parser = argparse.ArgumentParser(
        prog="dax",
        description="Ensemble data assimilation experiments on Lorenz-96",
    )
    parser.add_argument(
        "--verbose", action="store_true", help="Log debug messages to stderr",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    _build_run_parser(subparsers)
    _build_check_theory_parser(subparsers)
    subparsers.add_parser("version", help="Print the package version")

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    try:
        if args.command == "run":
            _run_experiment(args)
        elif args.command == "check-theory":
            _run_check_theory(args)
        elif args.command == "version":
            print(f"dax {__version__}")
    except DaxError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        sys.exit(1)


# ---------------------------------------------------------------------------
# Subcommand parsers
# ---------------------------------------------------------------------------

def _build_run_parser(subparsers: argparse._SubParsersAction) -> None:
    """Add the 'run' subcommand to the parser.

    Args:
        subparsers: The subparsers action to add to.
    """
    run_parser = subparsers.add_parser(
        "run", help="Run seeded assimilation trials and write CSV results",
    )
    run_parser.add_argument(
        "--config", default=None, help="Path to a key = value experiment file",
    )
    run_parser.add_argument(
        "--method", default=None,
        choices=[*config.METHOD_ALIASES, "all"],
        help="Run a single method (default: methods from the config)",
    )
    run_parser.add_argument("--trials", type=int, default=None, help="Number of trials")
    run_parser.add_argument("--seed", type=int, default=None, help="Base seed")
    run_parser.add_argument("--out", default=None, help="Output directory")
    run_parser.add_argument(
        "--jobs", type=int, default=None, help="joblib workers for (trial, method) tasks",
    )


def _build_check_theory_parser(subparsers: argparse._SubParsersAction) -> None:
    """Add the 'check-theory' subcommand to the parser.

    Args:
        subparsers: The subparsers action to add to.
    """
    check_parser = subparsers.add_parser(
        "check-theory", help="Monte-Carlo checks of covariance and spectral properties",
    )
    check_parser.add_argument("check", choices=config.THEORY_CHECKS, help="Check to run")
    check_parser.add_argument("--d", type=int, default=None, help="Residual dimension")
    check_parser.add_argument("--N", type=int, default=None, help="Ensemble size")
    check_parser.add_argument("--reps", type=int, default=None, help="Replications")
    check_parser.add_argument("--kappa", type=int, default=None, help="Truncation rank")
    check_parser.add_argument("--n", type=int, default=None, help="Gain rows (perturbation-variance)")
    check_parser.add_argument("--sigma", type=float, default=None, help="Noise std")
    check_parser.add_argument("--seed", type=int, default=None, help="Base seed")


# ---------------------------------------------------------------------------
# Subcommand runners
# ---------------------------------------------------------------------------

def _run_experiment(args: argparse.Namespace) -> None:
    """Execute the run subcommand.

    Args:
        args: Parsed arguments.
    """
    cfg = load_config(args.config)
    updates = {}
    if args.method is not None:
        updates["methods"] = parse_methods(args.method)
    if args.trials is not None:
        updates["n_trials"] = args.trials
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["output_dir"] = args.out
    if args.jobs is not None:
        updates["n_jobs"] = args.jobs
    cfg = replace(cfg, **updates)
    cfg.validate()

    print(
        f"Running {len(cfg.methods)} method(s) x {cfg.n_trials} trial(s): "
        f"n={cfg.n}, m={cfg.m}, N={cfg.N}, L={cfg.L}, W={cfg.W}, seed={cfg.seed}"
    )
    bundle = run_experiment(cfg, on_result=print_trial_progress)
    print_console_summary(bundle)
    export_all(bundle, cfg.output_dir)


def _run_check_theory(args: argparse.Namespace) -> None:
    """Execute the check-theory subcommand; exit 1 when the check fails.

    Args:
        args: Parsed arguments.
    """
    report = check_theory(
        args.check,
        d=args.d,
        N=args.N,
        reps=args.reps,
        kappa=args.kappa,
        n=args.n,
        sigma=args.sigma,
        seed=args.seed,
    )
    print_check_report(report)
    if not report.passed:
        sys.exit(1)
