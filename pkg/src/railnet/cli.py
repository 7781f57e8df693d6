"""Command line entry point: ``railnet solve|validate|sweep|gen|emit-model``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

from railnet.core import InstanceError
from railnet.generate import GeneratorError, GeneratorParams, generate_instance
from railnet.instance import InstanceLoadError, dumps_document, load_instance
from railnet.pipeline import build_model, finish, solve_instance, sweep_coverage, write_artifacts, write_sweep
from railnet.solve import (
    LPFormatError,
    SolutionFormatError,
    SolveLimits,
    SolveStatus,
    emit_model_text,
    import_solution,
)
from railnet.validate import ExtractionError, PlanSolution, check_plan

log = logging.getLogger("railnet")

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_INFEASIBLE = 2
EXIT_TIMEOUT = 3
EXIT_USAGE = 64
EXIT_DATA = 65

STATUS_EXIT = {
    SolveStatus.OPTIMAL: EXIT_OK,
    SolveStatus.FEASIBLE: EXIT_OK,
    SolveStatus.INFEASIBLE: EXIT_INFEASIBLE,
    SolveStatus.TIMED_OUT_NO_SOLUTION: EXIT_TIMEOUT,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _percent(text: str) -> Fraction:
    try:
        v = Fraction(text.rstrip("%"))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a percentage: {text!r}") from None
    if not 0 < v <= 100:
        raise argparse.ArgumentTypeError(f"coverage must lie in (0, 100], got {text}")
    return v


def _percent_list(text: str) -> list[Fraction]:
    """``10:100:10`` (inclusive range) or ``10,50,100``."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError("range must be start:stop:step")
        start, stop, step = (_percent(p) if n < 2 else Fraction(p) for n, p in enumerate(parts))
        if step <= 0:
            raise argparse.ArgumentTypeError("step must be positive")
        out = []
        v = start
        while v <= stop:
            out.append(v)
            v += step
        return out
    return [_percent(p) for p in text.split(",") if p]


def _trains(text: str) -> dict[str, int]:
    out = {}
    for part in text.split(","):
        name, sep, count = part.partition("=")
        if not sep or not name:
            raise argparse.ArgumentTypeError(f"expected TYPE=COUNT, got {part!r}")
        try:
            out[name] = int(count)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad train count {count!r}") from None
    return out


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("instance", help="instance JSON file")
    p.add_argument("--config", choices=("A", "B", "C"), help="preset overriding the instance's configuration")
    p.add_argument("--max-tracks", type=int, choices=(1, 2, 3, 4), help="global track limit")
    p.add_argument("--no-reductions", action="store_true", help="forbid travel-time and headway reductions")
    p.add_argument("--cross-scenario-headways", action="store_true",
                   help="also separate trains of different scenarios")
    p.add_argument("--no-track-rules", action="store_true", help="let any train use any built track")
    p.add_argument("--coverage", type=_percent, help="required share of scenarios, in percent")


def _add_limit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--time-limit", type=float, default=7200.0, help="seconds (default 7200)")
    p.add_argument("--gap", type=float, default=0.0, help="relative gap in percent at which to stop")
    p.add_argument("--node-limit", type=int, help="branch-and-bound node limit")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="railnet", description="Railway network design by mixed-integer optimisation.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="design a network for an instance")
    _add_model_flags(p)
    _add_limit_flags(p)
    p.add_argument("--solver", choices=("internal", "emit"), default="internal",
                   help="solve here, or write the model as LP text for an external solver")
    p.add_argument("--solution", help="external solver solution (name value lines) to read back")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("validate", help="check a plan against an instance")
    p.add_argument("plan", help="plan JSON written by solve")
    _add_model_flags(p)
    p.add_argument("--out", help="write the report as JSON to this file")

    p = sub.add_parser("sweep", help="solve once per coverage share")
    p.add_argument("instance")
    p.add_argument("--config", choices=("A", "B", "C"))
    p.add_argument("--max-tracks", type=int, choices=(1, 2, 3, 4))
    p.add_argument("--no-reductions", action="store_true")
    p.add_argument("--cross-scenario-headways", action="store_true")
    p.add_argument("--no-track-rules", action="store_true")
    p.add_argument("--coverage", type=_percent_list, default=_percent_list("10:100:10"),
                   help="shares in percent: start:stop:step or a comma list (default 10:100:10)")
    _add_limit_flags(p)
    p.add_argument("--out", help="CSV file for the sweep table")

    p = sub.add_parser("gen", help="write a seeded synthetic instance")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--nodes", type=int, default=5)
    p.add_argument("--sections", type=int)
    p.add_argument("--trains", type=_trains, default={"G": 2, "F": 1}, help="e.g. G=2,F=1")
    p.add_argument("--scenarios", type=int, default=1)
    p.add_argument("--optional-share", type=float, default=0.0)
    p.add_argument("--horizon", type=int, default=120)
    p.add_argument("--max-tracks", type=int, default=2, choices=(1, 2, 3, 4))
    p.add_argument("--coverage", type=_percent, default=Fraction(100))
    p.add_argument("--config", choices=("A", "B", "C"), default="B")
    p.add_argument("--out", help="output file (default stdout)")

    p = sub.add_parser("emit-model", help="write the model as LP text")
    _add_model_flags(p)
    p.add_argument("--out", help="output file (default stdout)")
    return parser


def _load(args):
    spec, family, config = load_instance(args.instance)
    changes = {}
    if args.config:
        base = type(config).preset(args.config)
        changes.update(max_tracks_global=base.max_tracks_global, reductions_allowed=base.reductions_allowed)
    if args.max_tracks:
        changes["max_tracks_global"] = args.max_tracks
    if args.no_reductions:
        changes["reductions_allowed"] = False
    if args.cross_scenario_headways:
        changes["cross_scenario_headways"] = True
    if args.no_track_rules:
        changes["track_rules"] = False
    config = dataclasses.replace(config, **changes)
    coverage = getattr(args, "coverage", None)
    if isinstance(coverage, Fraction):
        family = family.with_coverage(coverage / 100)
    return spec, family, config


def _limits(args) -> SolveLimits:
    return SolveLimits(
        time_limit_seconds=args.time_limit,
        relative_gap=args.gap / 100,
        node_limit=args.node_limit,
    )


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _summary(outcome) -> str:
    parts = [f"status {outcome.status.value}"]
    if outcome.objective is not None:
        parts.append(f"cost {float(outcome.objective):g}")
    if outcome.gap_percent is not None:
        parts.append(f"gap {outcome.gap_percent:.2f}%")
    if outcome.plan is not None:
        arcs, links = len(outcome.plan.built_arcs), len(outcome.plan.built_links)
        parts.append(f"{arcs} track{'s' * (arcs != 1)}, {links} link{'s' * (links != 1)}")
    if outcome.pathless:
        parts.append("no path for " + ", ".join(map(str, outcome.pathless)))
    return "; ".join(parts)


def cmd_solve(args) -> int:
    spec, family, config = _load(args)
    if args.solver == "emit" or args.solution:
        built = build_model(spec, family, config)
        if built.model is None:
            print(f"status {SolveStatus.INFEASIBLE.value}; no path for " + ", ".join(map(str, built.pathless)))
            return EXIT_INFEASIBLE
        if not args.solution:
            text = emit_model_text(built.model)
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                _write(text, str(Path(args.out) / "model.lp"))
                print(f"wrote {Path(args.out) / 'model.lp'}")
            else:
                _write(text, None)
            return EXIT_OK
        solution = import_solution(Path(args.solution).read_text(encoding="utf-8"), built.model)
        outcome = finish(built, solution, spec, family, config)
    else:
        outcome = solve_instance(spec, family, config, _limits(args))
    print(_summary(outcome))
    if args.out:
        for path in write_artifacts(args.out, outcome, spec, family):
            log.info("wrote %s", path)
    if outcome.validation is not None and not outcome.validation.ok:
        for v in outcome.validation.violations:
            print(f"violation {v}", file=sys.stderr)
        return EXIT_VIOLATIONS
    return STATUS_EXIT[outcome.status]


def cmd_validate(args) -> int:
    spec, family, config = _load(args)
    try:
        plan = PlanSolution.from_json(json.loads(Path(args.plan).read_text(encoding="utf-8")))
    except (ValueError, KeyError, TypeError) as exc:
        raise InstanceLoadError([f"plan {args.plan}: {exc}"]) from None
    report = check_plan(plan, family, spec, config)
    for v in report.violations:
        print(f"violation {v}")
    print("plan is valid" if report.ok else f"{len(report.violations)} violation(s)")
    if args.out:
        _write(json.dumps(report.to_json(), indent=2) + "\n", args.out)
    return EXIT_OK if report.ok else EXIT_VIOLATIONS


def cmd_sweep(args) -> int:
    spec, family, config = _load(args)
    try:
        rows = sweep_coverage(spec, family, config, args.coverage, _limits(args))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print("requested% achieved% status cost arcs links seconds")
    for r in rows:
        ach = "-" if r.achieved_percent is None else f"{float(r.achieved_percent):g}"
        cost = "-" if r.cost is None else f"{float(r.cost):g}"
        print(f"{float(r.requested_percent):g} {ach} {r.status} {cost} {r.arcs} {r.links} {r.runtime_seconds:.2f}")
    if args.out:
        write_sweep(args.out, rows)
    return EXIT_OK


def cmd_gen(args) -> int:
    params = GeneratorParams(
        nodes=args.nodes,
        sections=args.sections,
        trains_per_type=args.trains,
        scenarios=args.scenarios,
        optional_share=args.optional_share,
        horizon=args.horizon,
        max_tracks=args.max_tracks,
        coverage_share=float(args.coverage / 100),
        config=args.config,
    )
    try:
        doc = generate_instance(args.seed, params)
    except GeneratorError as exc:
        raise UsageError(str(exc)) from None
    _write(dumps_document(doc), args.out)
    return EXIT_OK


def cmd_emit_model(args) -> int:
    spec, family, config = _load(args)
    built = build_model(spec, family, config)
    if built.model is None:
        print("no path for " + ", ".join(map(str, built.pathless)), file=sys.stderr)
        return EXIT_INFEASIBLE
    _write(emit_model_text(built.model), args.out)
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "validate": cmd_validate,
    "sweep": cmd_sweep,
    "gen": cmd_gen,
    "emit-model": cmd_emit_model,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help and usage errors; callers get the code instead of an exit
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"railnet: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InstanceLoadError as exc:
        for d in exc.diagnostics:
            print(f"railnet: {d}", file=sys.stderr)
        return EXIT_DATA
    except (InstanceError, LPFormatError, SolutionFormatError, ExtractionError, OSError) as exc:
        print(f"railnet: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
