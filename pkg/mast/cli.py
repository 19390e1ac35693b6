"""Command-line entry point: run, sweep, report, list-problems, serve"""

import argparse
import logging
import os
import sys
from typing import List, Optional

from .benchmarks import catalog
from .config import load_config
from .errors import MastError
from .harness import SWEEP_ALIASES, SWEEP_KINDS, SweepSpec, failed_count, run_experiment, run_sweep
from .reporting import report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_PARTIAL_FAILURE = 2


def _parse_grid(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"grid must be a comma-separated list of numbers: {e}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mast", description="Multi-fidelity surrogate experiments."
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="Run one experiment block from a config file.")
    run.add_argument("--config", type=str, required=True, help="Path to a YAML or JSON config.")

    sweep = subparsers.add_parser("sweep", help="Run a sensitivity sweep.")
    sweep.add_argument("--config", type=str, required=True, help="Path to a YAML or JSON config.")
    sweep.add_argument(
        "--kind",
        choices=sorted(set(SWEEP_KINDS) | set(SWEEP_ALIASES)),
        required=True,
        help="Swept quantity.",
    )
    sweep.add_argument("--grid", type=_parse_grid, required=True, help="Comma-separated grid values.")

    rep = subparsers.add_parser("report", help="Aggregate record files into summaries.")
    rep.add_argument("--dir", type=str, required=True, help="Directory holding experiment blocks.")

    subparsers.add_parser("list-problems", help="List registered benchmark problems.")

    serve = subparsers.add_parser("serve", help="Serve saved surrogates over HTTP.")
    serve.add_argument("--host", type=str, default=os.getenv("HOST", "0.0.0.0"))
    serve.add_argument("--port", type=int, default=int(os.getenv("PORT", "8000")))
    return parser


def _list_problems() -> int:
    for problem in catalog():
        bounds = ", ".join(f"[{lo:g}, {hi:g}]" for lo, hi in problem.bounds)
        print(f"{problem.name}\t{problem.dimension}D\t{problem.discrepancy_kind.value}\t{bounds}")
    return EXIT_OK


def _serve(host: str, port: int) -> int:
    import uvicorn

    uvicorn.run("main:app", host=host, port=port, proxy_headers=True, forwarded_allow_ips="*")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )
    args = build_parser().parse_args(argv)

    try:
        if args.command == "list-problems":
            return _list_problems()
        if args.command == "serve":
            return _serve(args.host, args.port)
        if args.command == "report":
            report(args.dir)
            return EXIT_OK

        config = load_config(args.config)
        if args.command == "run":
            records = run_experiment(config)
        else:
            results = run_sweep(config, SweepSpec(args.kind, tuple(args.grid)))
            records = [record for block in results.values() for record in block]
    except MastError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_CONFIG_ERROR

    failed = failed_count(records)
    if failed:
        logger.warning(f"{failed} of {len(records)} runs failed")
        return EXIT_PARTIAL_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
