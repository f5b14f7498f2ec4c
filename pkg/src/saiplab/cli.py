"""
Command-line entry point::

    saiplab run --config recipe.yaml --out results/
    saiplab verify [--inject-scale-fault 1e-3]
    saiplab sweep --config canonical_toy.yaml --omegas 0.1 1 10
    saiplab trace-plot results/traces/trace_saip_chain0.csv

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

import argparse
import sys
from typing import List, Optional

from loguru import logger

from saiplab._version import __version__
from saiplab.constants.paths import OUTPUT_DIR_ENV_VAR
from saiplab.exceptions import (
    ConfigurationError,
    ContractViolation,
    DataSourceError,
    Degenerate,
    NotPositiveDefinite,
    ResourceLimit,
)
from saiplab.harness import cmd_run, cmd_sweep, cmd_trace_plot, cmd_verify
from saiplab.utilities import configure_logging_to_terminal

EXIT_RUNTIME_FAILURE = 1
EXIT_USAGE = 2


def _common_options() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", type=str, default=None, help="Path to a YAML recipe or run manifest.")
    parser.add_argument(
        "--out",
        type=str,
        default=None,
        help=f"Output directory (falls back to io.output_dir, then ${OUTPUT_DIR_ENV_VAR}).",
    )
    parser.add_argument("--seed", type=int, default=None, help="Override the configured seed.")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads for chain blocks.")
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level.")
    parser.add_argument("--no-progress", action="store_true", help="Hide progress bars.")
    return parser


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog="saiplab",
        description="Diffusion posterior sampling with an adaptive prior-score scale.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    subparsers.add_parser(
        "run", parents=[common], help="Run a task for the baseline and SAIP samplers."
    )
    verify = subparsers.add_parser(
        "verify", parents=[common], help="Run the oracle verification suite."
    )
    verify.add_argument(
        "--inject-scale-fault",
        type=float,
        default=0.0,
        metavar="DELTA",
        help="Perturb every computed scale by DELTA before checking it.",
    )
    sweep = subparsers.add_parser(
        "sweep", parents=[common], help="Sweep the guidance strength on a synthetic GMM task."
    )
    sweep.add_argument("--omegas", type=float, nargs="+", default=None, help="Guidance strengths.")
    trace_plot = subparsers.add_parser(
        "trace-plot", parents=[common], help="Summarize a trace CSV and emit gnuplot data."
    )
    trace_plot.add_argument("trace_csv", type=str, help="Trace CSV written by 'run'.")
    return parser


def _dispatch(args: argparse.Namespace) -> int:
    show_progress = not args.no_progress
    if args.command == "run":
        return cmd_run(args.config, args.out, args.seed, args.threads, show_progress)
    if args.command == "verify":
        return cmd_verify(args.seed, args.inject_scale_fault, args.out)
    if args.command == "sweep":
        return cmd_sweep(
            args.config, args.omegas, args.out, args.seed, args.threads, show_progress
        )
    return cmd_trace_plot(args.trace_csv)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging_to_terminal(args.verbose)
    try:
        return _dispatch(args)
    except (ConfigurationError, DataSourceError) as e:
        logger.error(e.message)
        return EXIT_USAGE
    except (ContractViolation, Degenerate, NotPositiveDefinite, ResourceLimit) as e:
        logger.error(e.message)
        return EXIT_RUNTIME_FAILURE


if __name__ == "__main__":
    sys.exit(main())
