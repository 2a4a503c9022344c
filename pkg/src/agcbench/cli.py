"""Command-line interface.

Usage::

    agcbench run --scenario 1 --scheme d --variant zero --out results/
    agcbench grid --jobs 4 --out results/
    agcbench compare results/summary.json            # against reference values
    agcbench compare a.json b.json
    agcbench export --scenario 2 --out scenario2.txt
    agcbench validate my_scenario.txt

Exit codes: 0 success, 1 usage error, 2 validation error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .exceptions import (
    AgcBenchError,
    ParameterError,
    ScenarioParseError,
    TopologyError,
)
from .experiments import (
    ExperimentGrid,
    _atomic_write,
    compare_summaries,
    export_results,
    format_comparison,
    format_tables,
    load_summary,
    reference_records,
    run_experiment_grid,
)
from .scenarios import builtin_scenario, parse_scenario_file, serialize_scenario

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3

SCHEME_CHOICES = {"d": "D", "dss": "Dss"}
VARIANT_CHOICES = ("full", "diag", "zero")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def load_scenario(arg, T_sim=None):
    """``1``, ``2``, ``3`` select a built-in scenario; anything else is a file path."""
    if arg in ("1", "2", "3"):
        return builtin_scenario(int(arg), T_sim=T_sim) if T_sim else builtin_scenario(int(arg))
    text = Path(arg).read_text()
    spec = parse_scenario_file(text)
    if T_sim:
        from dataclasses import replace

        spec = replace(spec, T_sim=T_sim)
    return spec


def _scheme(value):
    try:
        return SCHEME_CHOICES[value.lower()]
    except KeyError:
        raise argparse.ArgumentTypeError(f"invalid scheme {value!r} (choose d or dss)") from None


def _variant(value):
    v = value.lower()
    if v.startswith("mpc"):
        v = v[3:]
    if v not in VARIANT_CHOICES:
        raise argparse.ArgumentTypeError(f"invalid variant {value!r} (choose full, diag or zero)")
    return v


def build_parser():
    parser = _Parser(prog="agcbench", description="Centralized MPC benchmark for multi-area AGC.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--horizon", type=int, default=15)
        p.add_argument("--tsim", type=int, default=None)
        p.add_argument("--tol", type=float, default=1e-8)
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("run", help="run one scenario/scheme/variant cell")
    p.add_argument("--scenario", required=True, help="1, 2, 3 or a scenario file")
    p.add_argument("--scheme", type=_scheme, default="D")
    p.add_argument("--variant", type=_variant, default="zero")
    common(p)

    p = sub.add_parser("grid", help="run the scenario x scheme x variant grid")
    p.add_argument("--scenario", action="append", default=None, help="repeatable; default 1 2 3")
    p.add_argument("--scheme", type=_scheme, action="append", default=None)
    p.add_argument("--variant", type=_variant, action="append", default=None)
    p.add_argument("--jobs", type=int, default=1)
    common(p)

    p = sub.add_parser("compare", help="element-wise difference of two summaries")
    p.add_argument("summary", help="summary JSON")
    p.add_argument("other", nargs="?", default=None, help="second summary; default: reference values")
    p.add_argument("--out", default=None, help="write the comparison as JSON")

    p = sub.add_parser("export", help="write a scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True, help="target file")

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("file")
    return parser


def _cmd_grid(args, scenarios, schemes, variants, jobs):
    grid = ExperimentGrid(
        scenarios=scenarios, schemes=schemes, variants=variants,
        horizon=args.horizon, tol=args.tol, jobs=jobs,
    )
    results = run_experiment_grid(grid)
    records = [c.record() for c in results]
    if records:
        print(format_tables(records), end="")
    for c in results:
        if not c.ok:
            print(f"FAILED {c.scenario}/{c.scheme}/{c.variant}: {c.error}", file=sys.stderr)
    if args.out:
        out = Path(args.out)
        export_results(results, "json", out / "summary.json")
        export_results(results, "csv", out)
    return EXIT_OK if all(c.ok for c in results) else EXIT_RUNTIME


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "run":
            spec = load_scenario(args.scenario, args.tsim)
            return _cmd_grid(args, [spec], [args.scheme], [args.variant], 1)
        if args.command == "grid":
            names = args.scenario or ["1", "2", "3"]
            specs = [load_scenario(s, args.tsim) for s in names]
            return _cmd_grid(
                args, specs, args.scheme or ["D", "Dss"], args.variant or list(VARIANT_CHOICES), max(1, args.jobs)
            )
        if args.command == "compare":
            a = load_summary(args.summary)
            b = load_summary(args.other) if args.other else reference_records()
            rows = compare_summaries(a, b)
            print(format_comparison(rows), end="")
            if args.out:
                import json

                _atomic_write(Path(args.out), json.dumps(rows, indent=2) + "\n")
            return EXIT_OK
        if args.command == "export":
            spec = load_scenario(args.scenario)
            _atomic_write(Path(args.out), serialize_scenario(spec))
            return EXIT_OK
        if args.command == "validate":
            spec = parse_scenario_file(Path(args.file).read_text())
            print(
                f"{args.file}: ok ({spec.name}, {spec.topology.n_areas} areas, "
                f"{len(spec.topology.ties)} ties, {len(spec.events)} events)"
            )
            return EXIT_OK
    except (ScenarioParseError, ParameterError, TopologyError, ValueError, KeyError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AgcBenchError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
