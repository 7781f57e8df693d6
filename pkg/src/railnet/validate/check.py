"""Independent feasibility check of a plan against the instance semantics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

from railnet.core import (
    BuildConfig,
    InfrastructureSpec,
    RelationKind,
    TimetableFamily,
    TrainKey,
    allowed_tracks,
    direction_of,
    effective_max_tracks,
    headway_reduction_cap,
    link_key,
    section_key,
    time_reduction_cap,
)
from railnet.validate.plan import PlanSolution, Route

RULES = (
    "path",
    "link",
    "travel-time",
    "time-bounds",
    "node-timing",
    "max-stop",
    "frequency",
    "transfer",
    "headway-following",
    "headway-crossing",
    "conflict",
    "track-order",
    "reduction-cap",
    "coverage-share",
    "optional-count",
)


@dataclass(frozen=True)
class Violation:
    rule: str
    location: str
    detail: str = ""

    def to_json(self) -> dict:
        return {"rule": self.rule, "location": self.location, "detail": self.detail}


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}

    def to_json(self) -> dict:
        return {"ok": self.ok, "violations": [v.to_json() for v in self.violations]}


def check_plan(
    plan: PlanSolution, family: TimetableFamily, spec: InfrastructureSpec, config: BuildConfig | None = None
) -> ValidationReport:
    config = config or BuildConfig()
    out: list[Violation] = []

    def bad(rule: str, where: str, detail: str = "") -> None:
        out.append(Violation(rule, where, detail))

    _check_network(plan, spec, config, bad)
    _check_activation(plan, family, bad)

    active = sorted(k for k in plan.active_trains if k.scenario in plan.active_scenarios)
    for key in active:
        route = plan.routes.get(key)
        if route is None:
            bad("path", f"train {key}", "active train has no route")
            continue
        _check_route(key, route, plan, family, spec, config, bad)
    for key in sorted(set(plan.routes) - set(active)):
        bad("coverage-share", f"train {key}", "route given for an inactive train")

    for sc in family.scenarios:
        if sc.id not in plan.active_scenarios:
            continue
        for r in sc.relations:
            _check_relation(sc.id, r, plan, bad)

    _check_separation(plan, active, family, spec, config, bad)
    return ValidationReport(sorted(set(out), key=lambda v: (RULES.index(v.rule), v.location, v.detail)))


def _check_network(plan, spec, config, bad) -> None:
    for u, v, tr in sorted(plan.built_arcs):
        where = f"arc {u}-{v} track {tr}"
        if (u, v) != section_key(u, v) or (u, v) not in spec.section_map:
            bad("path", where, "arc on an undeclared section")
            continue
        sec = spec.section(u, v)
        if not 1 <= tr <= effective_max_tracks(sec, config):
            bad("track-order", where, "track index beyond the allowed number of tracks")
        if tr == 2 and (u, v, 1) not in plan.built_arcs:
            bad("track-order", where, "track 2 without track 1")
        if tr > 2 and (u, v, 2) not in plan.built_arcs:
            bad("track-order", where, f"track {tr} without track 2")
    for lk in sorted(plan.built_links):
        if lk not in spec.link_map:
            bad("link", f"link {lk[0]}:{lk[1]}-{lk[2]}", "undeclared link")
    for (u, v), (rt, rh) in sorted(plan.reductions.items()):
        where = f"section {u}-{v}"
        if (u, v) not in spec.section_map:
            if rt or rh:
                bad("reduction-cap", where, "reduction on an undeclared section")
            continue
        sec = spec.section(u, v)
        if not 0 <= rt <= time_reduction_cap(sec, config):
            bad("reduction-cap", where, f"time reduction {rt}")
        if not 0 <= rh <= headway_reduction_cap(sec, config):
            bad("reduction-cap", where, f"headway reduction {rh}")


def _check_activation(plan, family, bad) -> None:
    known = {sc.id for sc in family.scenarios}
    for s in sorted(plan.active_scenarios - known):
        bad("coverage-share", f"scenario {s}", "unknown scenario")
    need = math.ceil(Fraction(family.coverage_share) * len(family.scenarios))
    have = len(plan.active_scenarios & known)
    if have < need:
        bad("coverage-share", "family", f"{have} active scenarios, {need} required")
    for key in sorted(plan.active_trains):
        if key.scenario not in plan.active_scenarios:
            bad("coverage-share", f"train {key}", "train active in an inactive scenario")
    for sc in family.scenarios:
        if sc.id not in plan.active_scenarios:
            continue
        for t in sc.trains:
            key = TrainKey(sc.id, t.id)
            if sc.is_mandatory(t.id) and key not in plan.active_trains:
                bad("path", f"train {key}", "mandatory train not operated")
        n_opt = sum(1 for t in sc.trains if t.optional and TrainKey(sc.id, t.id) in plan.active_trains)
        if n_opt < sc.demanded_optional:
            bad("optional-count", f"scenario {sc.id}", f"{n_opt} optional trains, {sc.demanded_optional} demanded")


def _check_route(key, route: Route, plan, family, spec, config, bad) -> None:
    train = family.train(key)
    where = f"train {key}"
    nodes = route.nodes
    if len(nodes) < 2 or nodes[0] != train.origin or nodes[-1] != train.destination:
        bad("path", where, f"route {'-'.join(nodes)} does not run {train.origin} to {train.destination}")
        return
    if len(set(nodes)) != len(nodes):
        bad("path", where, "route revisits a node")
    if len(route.tracks) != len(nodes) - 1 or len(route.times) != len(nodes) - 1:
        bad("path", where, "track or time list does not match the route")
        return
    missing = train.via_nodes - set(nodes)
    if missing:
        bad("path", where, f"misses via node(s) {', '.join(sorted(missing))}")

    for idx, (i, j, tr) in enumerate(route.arcs):
        at = f"{where} arc {i}-{j} track {tr}"
        u, v = section_key(i, j)
        if (u, v) not in spec.section_map:
            bad("path", at, "no such section")
            continue
        sec = spec.section(i, j)
        if (u, v, tr) not in plan.built_arcs:
            bad("path", at, "arc not built")
        m = effective_max_tracks(sec, config)
        if config.track_rules and 1 <= m and tr not in allowed_tracks(direction_of(i, j), m):
            bad("track-order", at, f"track {tr} not usable in this direction")
        t = sec.travel_time.get(train.train_type)
        if t is None:
            bad("path", at, f"section not open to type {train.train_type}")
            continue
        d, a = route.times[idx]
        r_time = plan.reduction(i, j)[0]
        if a - d != t - r_time:
            bad("travel-time", at, f"runs {a - d} min, expected {t - r_time}")

    first_dep, last_arr = route.times[0][0], route.times[-1][1]
    if first_dep < train.earliest_departure:
        bad("time-bounds", where, f"departs {first_dep} before {train.earliest_departure}")
    if last_arr > train.latest_arrival:
        bad("time-bounds", where, f"arrives {last_arr} after {train.latest_arrival}")

    for idx in range(1, len(nodes) - 1):
        a, n, b = nodes[idx - 1], nodes[idx], nodes[idx + 1]
        lk = link_key(n, a, b)
        if lk not in plan.built_links:
            bad("link", f"{where} at {n}", f"link {a}-{b} not built")
        arr, dep = route.times[idx - 1][1], route.times[idx][0]
        if dep < arr:
            bad("node-timing", f"{where} at {n}", f"departs {dep} before arriving {arr}")
        elif n in spec.node_map and dep - arr > spec.node_map[n].max_stop_minutes:
            bad("max-stop", f"{where} at {n}", f"stops {dep - arr} min")


def _check_relation(scenario: str, r, plan: PlanSolution, bad) -> None:
    k1, k2 = TrainKey(scenario, r.first), TrainKey(scenario, r.second)
    rule = "transfer" if r.kind is RelationKind.TRANSFER else "frequency"
    where = f"{r.kind.value} {k1}->{k2} at {r.node}"
    r1, r2 = plan.routes.get(k1), plan.routes.get(k2)
    if r1 is None or r2 is None:
        bad(rule, where, "train not operated")
        return
    if r.kind is RelationKind.ARRIVAL_FREQUENCY:
        e1, e2 = r1.arrival_at(r.node), r2.arrival_at(r.node)
    elif r.kind is RelationKind.DEPARTURE_FREQUENCY:
        e1, e2 = r1.departure_at(r.node), r2.departure_at(r.node)
    else:
        e1, e2 = r1.arrival_at(r.node), r2.departure_at(r.node)
    if e1 is None or e2 is None:
        bad(rule, where, "event missing from a route")
        return
    if not r.min_minutes <= e2 - e1 <= r.max_minutes:
        bad(rule, where, f"gap {e2 - e1} outside [{r.min_minutes}, {r.max_minutes}]")


def _check_separation(plan, active, family, spec, config, bad) -> None:
    usage: dict[tuple[str, str, int], list[tuple[TrainKey, str, int, int]]] = {}
    for key in active:
        route = plan.routes.get(key)
        if route is None or len(route.tracks) != len(route.nodes) - 1 or len(route.times) != len(route.tracks):
            continue
        for (i, j, tr), (d, a) in zip(route.arcs, route.times):
            if section_key(i, j) in spec.section_map:
                usage.setdefault((*section_key(i, j), tr), []).append((key, i, d, a))
    for (u, v, tr), users in sorted(usage.items()):
        sec = spec.section(u, v)
        h_red = plan.reduction(u, v)[1]
        for (k1, i1, d1, a1), (k2, i2, d2, a2) in combinations(users, 2):
            if k1.scenario != k2.scenario and not config.cross_scenario_headways:
                continue
            where = f"arc {u}-{v} track {tr} trains {k1},{k2}"
            if i1 == i2:
                (lk, ld), (fk, fd) = sorted([(k1, d1), (k2, d2)], key=lambda e: (e[1], e[0]))
                need = sec.base_headway[(family.train(lk).train_type, family.train(fk).train_type)] - h_red
                if fd - ld < need:
                    bad("headway-following", where, f"departures {ld},{fd} need {need} min")
            else:
                # k1 enters at i1 and leaves at the far end, where k2 starts
                far1 = v if i1 == u else u
                c_far = spec.node_map[far1].crossing_time_minutes
                c_near = spec.node_map[i1].crossing_time_minutes
                if max(d1, d2) < min(a1, a2):
                    bad("conflict", where, f"occupations [{d1},{a1}] and [{d2},{a2}] overlap")
                elif not (d2 - a1 >= c_far or d1 - a2 >= c_near):
                    bad("headway-crossing", where, f"crossing gap below {c_far}/{c_near} min")


def recompute_cost(plan: PlanSolution, spec: InfrastructureSpec, family: TimetableFamily | None = None):
    """Building, reduction and penalty cost of a plan."""
    cost = sum((spec.section(u, v).track_cost[tr] for u, v, tr in plan.built_arcs), 0)
    cost += sum((spec.link_map[lk].cost for lk in plan.built_links), 0)
    for (u, v), (rt, rh) in plan.reductions.items():
        sec = spec.section(u, v)
        cost += sec.time_reduction_cost * rt + sec.headway_reduction_cost * rh
    if family is not None:
        for sc in family.scenarios:
            if sc.id not in plan.active_scenarios:
                cost += sc.penalty
            for t in sc.trains:
                if TrainKey(sc.id, t.id) not in plan.active_trains:
                    cost += t.penalty
    return cost
