"""Preprocess, build, solve, extract and check; plus coverage sweeps and result tables."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path as FilePath

from railnet.core import BuildConfig, InfrastructureSpec, TimetableFamily, section_key
from railnet.milp import MilpModel, build_deterministic, build_robust
from railnet.preprocess import (
    HeadwaySets,
    InfeasibleInstanceError,
    RelevantSets,
    build_headway_sets,
    build_relevant_sets,
)
from railnet.solve import MilpSolution, SolveLimits, SolveStatus, solve_branch_and_bound
from railnet.validate import PlanSolution, ValidationReport, check_plan, extract_plan, recompute_cost

log = logging.getLogger(__name__)


@dataclass
class BuiltModel:
    model: MilpModel | None
    rel: RelevantSets | None
    hw: HeadwaySets | None
    robust: bool
    preprocess_seconds: float
    build_seconds: float
    # trains without any admissible path (the deterministic model is then infeasible)
    pathless: tuple = ()


@dataclass
class SolveOutcome:
    status: SolveStatus
    robust: bool
    objective: int | Fraction | None = None
    best_bound: float | None = None
    gap_percent: float | None = None
    plan: PlanSolution | None = None
    validation: ValidationReport | None = None
    model: MilpModel | None = None
    solution: MilpSolution | None = None
    preprocess_seconds: float = 0.0
    build_seconds: float = 0.0
    solve_seconds: float = 0.0
    nodes: int = 0
    sets: dict = field(default_factory=dict)
    pathless: tuple = ()

    def report(self, spec: InfrastructureSpec | None = None, family: TimetableFamily | None = None) -> dict:
        out = {
            "status": self.status.value,
            "mode": "robust" if self.robust else "deterministic",
            "objective": _num(self.objective),
            "best_bound": self.best_bound,
            "gap_percent": self.gap_percent,
            "preprocess_seconds": round(self.preprocess_seconds, 4),
            "build_seconds": round(self.build_seconds, 4),
            "solve_seconds": round(self.solve_seconds, 4),
            "branch_and_bound_nodes": self.nodes,
            "variables": len(self.model.variables) if self.model else 0,
            "constraints": len(self.model.constraints) if self.model else 0,
            "constraint_tags": dict(sorted(self.model.provenance.items())) if self.model else {},
            "sets": self.sets,
        }
        if self.pathless:
            out["trains_without_paths"] = [str(k) for k in self.pathless]
        if self.plan is not None and spec is not None:
            out["recomputed_cost"] = _num(recompute_cost(self.plan, spec, family))
            out["active_scenarios"] = sorted(self.plan.active_scenarios)
        if self.validation is not None:
            out["validation"] = self.validation.to_json()
        return out


def _num(v):
    if v is None:
        return None
    f = Fraction(v)
    return f.numerator if f.denominator == 1 else float(f)


def build_model(spec: InfrastructureSpec, family: TimetableFamily, config: BuildConfig) -> BuiltModel:
    """Deterministic model for single-scenario full-coverage families, otherwise the robust one."""
    robust = not family.is_deterministic
    t0 = time.perf_counter()
    try:
        rel = build_relevant_sets(family, spec, config)
    except InfeasibleInstanceError as exc:
        return BuiltModel(None, None, None, robust, time.perf_counter() - t0, 0.0, tuple(exc.trains))
    hw = build_headway_sets(family, rel, spec, config)
    t1 = time.perf_counter()
    builder = build_robust if robust else build_deterministic
    model = builder(family, rel, hw, spec, config)
    return BuiltModel(model, rel, hw, robust, t1 - t0, time.perf_counter() - t1, rel.pathless)


def _sets_summary(built: BuiltModel) -> dict:
    if built.rel is None:
        return {}
    out = {
        "X": len(built.rel.x),
        "E_a": len(built.rel.arcs),
        "L_a": len(built.rel.links),
        "S_a": len(built.rel.sections),
        "N_a": len(built.rel.nodes),
    }
    out.update(built.hw.counts())
    return out


def finish(
    built: BuiltModel,
    solution: MilpSolution,
    spec: InfrastructureSpec,
    family: TimetableFamily,
    config: BuildConfig,
) -> SolveOutcome:
    """Extract and check a model solution."""
    outcome = SolveOutcome(
        status=solution.status,
        robust=built.robust,
        objective=solution.objective,
        best_bound=solution.best_bound,
        gap_percent=solution.gap_percent,
        model=built.model,
        solution=solution,
        preprocess_seconds=built.preprocess_seconds,
        build_seconds=built.build_seconds,
        solve_seconds=solution.runtime_seconds,
        nodes=solution.nodes,
        sets=_sets_summary(built),
        pathless=built.pathless,
    )
    if solution.values is not None:
        outcome.plan = extract_plan(solution, built.model, family)
        outcome.validation = check_plan(outcome.plan, family, spec, config)
        if not outcome.validation.ok:
            log.error("solver plan failed validation: %s", outcome.validation.violations[0])
    return outcome


def solve_instance(
    spec: InfrastructureSpec,
    family: TimetableFamily,
    config: BuildConfig,
    limits: SolveLimits | None = None,
) -> SolveOutcome:
    built = build_model(spec, family, config)
    if built.model is None:
        return SolveOutcome(
            SolveStatus.INFEASIBLE,
            built.robust,
            preprocess_seconds=built.preprocess_seconds,
            pathless=built.pathless,
        )
    solution = solve_branch_and_bound(built.model, limits)
    return finish(built, solution, spec, family, config)


# -- coverage sweep ---------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    requested_percent: Fraction
    achieved_percent: Fraction | None
    status: str
    cost: int | Fraction | None
    infrastructure_cost: int | Fraction | None
    arcs: int | None
    links: int | None
    runtime_seconds: float
    gap_percent: float | None

    def as_csv(self) -> list:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, Fraction):
                return str(v.numerator) if v.denominator == 1 else f"{float(v):.4f}"
            if isinstance(v, float):
                return f"{v:.4f}"
            return str(v)

        return [fmt(getattr(self, f)) for f in SWEEP_COLUMNS]


SWEEP_COLUMNS = (
    "requested_percent",
    "achieved_percent",
    "status",
    "cost",
    "infrastructure_cost",
    "arcs",
    "links",
    "runtime_seconds",
    "gap_percent",
)


def sweep_coverage(
    spec: InfrastructureSpec,
    family: TimetableFamily,
    config: BuildConfig,
    shares_percent,
    limits: SolveLimits | None = None,
) -> list[SweepRow]:
    """One robust solve per requested coverage share (in percent)."""
    if len(family.scenarios) < 2:
        raise ValueError("a coverage sweep needs a family with at least two scenarios")
    rows = []
    for pct in shares_percent:
        pct = Fraction(pct)
        if not 0 < pct <= 100:
            raise ValueError(f"coverage share {pct}% outside (0, 100]")
        fam = family.with_coverage(pct / 100)
        out = solve_instance(spec, fam, config, limits)
        plan = out.plan
        if plan is not None:
            achieved = Fraction(100 * len(plan.active_scenarios), len(family.scenarios))
            infra = recompute_cost(plan, spec)
            arcs, links = len(plan.built_arcs), len(plan.built_links)
        else:
            achieved = infra = arcs = links = None
        rows.append(
            SweepRow(
                pct, achieved, out.status.value, out.objective, infra, arcs, links,
                out.preprocess_seconds + out.build_seconds + out.solve_seconds, out.gap_percent,
            )
        )
        log.info("coverage %s%%: %s cost %s", pct, out.status.value, out.objective)
    return rows


def write_sweep(path: str | FilePath, rows: list[SweepRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow(r.as_csv())


# -- result tables ----------------------------------------------------------------------


def _write_csv(path: FilePath, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def network_rows(plan: PlanSolution, spec: InfrastructureSpec) -> list[list]:
    rows = []
    for u, v, tr in sorted(plan.built_arcs):
        rows.append(["arc", "", u, v, tr, "", _num(spec.section(u, v).track_cost[tr])])
    for at, a, b in sorted(plan.built_links):
        rows.append(["link", at, a, b, "", "", _num(spec.link_map[(at, a, b)].cost)])
    for (u, v), (rt, rh) in sorted(plan.reductions.items()):
        sec = spec.section(u, v)
        if rt:
            rows.append(["time_reduction", "", u, v, "", rt, _num(sec.time_reduction_cost * rt)])
        if rh:
            rows.append(["headway_reduction", "", u, v, "", rh, _num(sec.headway_reduction_cost * rh)])
    return rows


def routing_rows(plan: PlanSolution, family: TimetableFamily) -> list[list]:
    return [
        [k.scenario, k.train, family.train(k).train_type, "-".join(r.nodes), "-".join(map(str, r.tracks))]
        for k, r in sorted(plan.routes.items())
    ]


def timetable_rows(plan: PlanSolution) -> list[list]:
    rows = []
    for k, r in sorted(plan.routes.items()):
        for idx, node in enumerate(r.nodes):
            arr = r.times[idx - 1][1] if idx > 0 else ""
            dep = r.times[idx][0] if idx < len(r.times) else ""
            rows.append([k.scenario, k.train, node, arr, dep])
    return rows


def diagram_rows(plan: PlanSolution, family: TimetableFamily, spec: InfrastructureSpec) -> list[list]:
    """Per train: (distance along its route, time) points at every arrival and departure."""
    rows = []
    for k, r in sorted(plan.routes.items()):
        ttype = family.train(k).train_type
        dist = Fraction(0)
        for idx, ((i, j), (d, a)) in enumerate(zip(zip(r.nodes, r.nodes[1:]), r.times)):
            rows.append([k.scenario, k.train, ttype, i, _num(dist), d])
            dist += spec.section_map[section_key(i, j)].length_km
            rows.append([k.scenario, k.train, ttype, j, _num(dist), a])
    return rows


def write_artifacts(
    out_dir: str | FilePath,
    outcome: SolveOutcome,
    spec: InfrastructureSpec,
    family: TimetableFamily,
) -> list[FilePath]:
    out = FilePath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if outcome.plan is not None:
        plan = outcome.plan
        tables = {
            "network.csv": (("element", "at", "from", "to", "track", "minutes", "cost"), network_rows(plan, spec)),
            "routing.csv": (("scenario", "train", "train_type", "nodes", "tracks"), routing_rows(plan, family)),
            "timetable.csv": (("scenario", "train", "node", "arrival", "departure"), timetable_rows(plan)),
            "diagram.csv": (
                ("scenario", "train", "train_type", "node", "distance_km", "time"),
                diagram_rows(plan, family, spec),
            ),
        }
        for name, (header, rows) in tables.items():
            _write_csv(out / name, header, rows)
            written.append(out / name)
        (out / "plan.json").write_text(json.dumps(plan.to_json(), indent=2) + "\n", encoding="utf-8")
        written.append(out / "plan.json")
    (out / "report.json").write_text(json.dumps(outcome.report(spec, family), indent=2) + "\n", encoding="utf-8")
    written.append(out / "report.json")
    return written
