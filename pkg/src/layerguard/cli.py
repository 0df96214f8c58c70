"""layerguard command line: validate, run and report on scenario files.

Exit codes: 0 success, 1 validation failure, 2 I/O failure (argparse also
uses 2 for malformed command lines).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import report as reporting
from .engine import MODES, simulate
from .scenario import parse_scenario
from .validation import validate, validate_scenario

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2

log = logging.getLogger("layerguard")


def _print_diagnostics(path, diagnostics) -> None:
    for d in diagnostics:
        print(f"{path}:{d}", file=sys.stderr)


def cmd_validate(args) -> int:
    try:
        Path(args.scenario).read_bytes()
    except OSError as exc:
        print(f"cannot read {args.scenario}: {exc}", file=sys.stderr)
        return EXIT_IO
    diagnostics = validate(args.scenario, lenient=args.lenient)
    _print_diagnostics(args.scenario, diagnostics)
    if any(d.is_error for d in diagnostics):
        return EXIT_INVALID
    print(f"{args.scenario}: ok")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        text = Path(args.scenario).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        print(f"cannot read {args.scenario}: {exc}", file=sys.stderr)
        return EXIT_IO
    scenario, diagnostics = parse_scenario(text, lenient=args.lenient)
    if scenario is not None:
        if args.seed is not None:
            scenario = replace(scenario, seed=args.seed)
        diagnostics = diagnostics + validate_scenario(scenario)
    _print_diagnostics(args.scenario, diagnostics)
    if scenario is None or any(d.is_error for d in diagnostics):
        return EXIT_INVALID

    out = Path(args.out) if args.out else Path(f"run-{scenario.name}")
    log.info("running %s (seed %d, %s mode)", scenario.name, scenario.seed, args.mode)
    result = simulate(scenario, mode=args.mode)
    try:
        reporting.write_run(result, out, args.format)
    except OSError as exc:
        print(f"cannot write to {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    print(reporting.format_summary(reporting.build_report(result)))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        data = reporting.load_report(args.run_dir)
    except (OSError, ValueError) as exc:
        print(f"cannot read report from {args.run_dir}: {exc}", file=sys.stderr)
        return EXIT_IO
    print(reporting.format_summary(data))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="layerguard", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file and print diagnostics")
    p.add_argument("scenario")
    p.add_argument("--lenient", action="store_true", help="warn about unknown keys instead of failing")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="simulate a scenario and write metrics, traces and report")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", help="output directory (default: run-<scenario name>)")
    p.add_argument("--format", choices=("json", "csv"), default="json", help="metrics file format")
    p.add_argument("--mode", choices=MODES, default="sequential", help="engine evaluation mode")
    p.add_argument("--lenient", action="store_true", help="warn about unknown keys instead of failing")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="print the summary of a finished run")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "run" and args.seed is not None and not 0 <= args.seed < 2**64:
        print("--seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INVALID
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
