"""Command line: ``python -m rbsdelab <command> --scenario FILE [options]``."""

from __future__ import annotations

import argparse
import sys

from ..errors import InvalidScenarioError, SolverError
from .runner import COMMANDS, VerificationFailure, dumps, run
from .scenario import load_scenario

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_SOLVER = 3
EXIT_VERIFY = 4


def _n_list(text: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 0:
        raise argparse.ArgumentTypeError("n-list needs non-negative integers")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rbsdelab", description="Reflected BSDE solvers on a binomial tree.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--scenario", required=True, help="scenario JSON file")
    parser.add_argument("--steps", type=int, help="override the number of time steps N")
    parser.add_argument("--n-list", type=_n_list, help="penalty levels, e.g. 1,2,4,8")
    parser.add_argument("--p", type=float, help="exponent for the reported norms")
    parser.add_argument("--scheme", choices=("upper", "lower", "bsde"), default="upper")
    parser.add_argument("--out", help="directory for result.json, meta.json and CSV tables")
    parser.add_argument("--seed", type=int, help="override the scenario seed")
    parser.add_argument("--workers", type=int, default=1, help="threads for sweeps")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = load_scenario(args.scenario)
        if args.steps is not None:
            scenario = scenario.with_steps(args.steps)
        if args.seed is not None:
            scenario.seed = args.seed
        bundle = run(scenario, args.command, n_list=args.n_list, scheme=args.scheme, p=args.p, workers=args.workers)
    except (InvalidScenarioError, FileNotFoundError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except VerificationFailure as exc:
        if args.out:
            exc.bundle.save(args.out)
        print(f"verification failed: {exc}", file=sys.stderr)
        print(dumps(exc.bundle.payload["residuals"]))
        return EXIT_VERIFY
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if args.out:
        bundle.save(args.out)
    if bundle.tables:
        for name, table in bundle.tables.items():
            print(f"# {name}")
            print(table.to_csv(), end="")
    else:
        summary = {k: v for k, v in bundle.payload.items() if k not in ("Y", "Z")}
        print(dumps(summary))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
