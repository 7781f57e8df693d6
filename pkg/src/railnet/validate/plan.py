"""Decoded network plans and their JSON form."""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

from railnet.core import TimetableFamily, TrainKey, section_key
from railnet.milp import MilpModel
from railnet.solve.result import MilpSolution

_NAME_RE = re.compile(r"^([a-z_]+)\((.*)\)$")


class ExtractionError(ValueError):
    pass


@dataclass(frozen=True)
class Route:
    nodes: tuple[str, ...]
    # one entry per traversed section, in travel order
    tracks: tuple[int, ...]
    times: tuple[tuple[int, int], ...]

    @property
    def arcs(self) -> tuple[tuple[str, str, int], ...]:
        return tuple((i, j, tr) for (i, j), tr in zip(zip(self.nodes, self.nodes[1:]), self.tracks))

    def arrival_at(self, node: str) -> int | None:
        for (_, j, _), (_, a) in zip(self.arcs, self.times):
            if j == node:
                return a
        return None

    def departure_at(self, node: str) -> int | None:
        for (i, _, _), (d, _) in zip(self.arcs, self.times):
            if i == node:
                return d
        return None


@dataclass
class PlanSolution:
    built_arcs: set[tuple[str, str, int]] = field(default_factory=set)
    built_links: set[tuple[str, str, str]] = field(default_factory=set)
    # section -> (time reduction, headway reduction)
    reductions: dict[tuple[str, str], tuple[int, int]] = field(default_factory=dict)
    routes: dict[TrainKey, Route] = field(default_factory=dict)
    active_scenarios: set[str] = field(default_factory=set)
    active_trains: set[TrainKey] = field(default_factory=set)

    def reduction(self, i: str, j: str) -> tuple[int, int]:
        return self.reductions.get(section_key(i, j), (0, 0))

    @property
    def timetable(self) -> dict[TrainKey, tuple[tuple[int, int], ...]]:
        return {k: r.times for k, r in self.routes.items()}

    def to_json(self) -> dict:
        return {
            "built_arcs": [list(a) for a in sorted(self.built_arcs)],
            "built_links": [list(l) for l in sorted(self.built_links)],
            "reductions": [
                {"section": list(s), "time": t, "headway": h}
                for s, (t, h) in sorted(self.reductions.items())
                if t or h
            ],
            "active_scenarios": sorted(self.active_scenarios),
            "routes": [
                {
                    "scenario": k.scenario,
                    "train": k.train,
                    "nodes": list(r.nodes),
                    "tracks": list(r.tracks),
                    "times": [list(t) for t in r.times],
                }
                for k, r in sorted(self.routes.items())
            ],
            "active_trains": [[k.scenario, k.train] for k in sorted(self.active_trains)],
        }

    @classmethod
    def from_json(cls, doc: dict) -> PlanSolution:
        try:
            return cls(
                built_arcs={(a, b, int(t)) for a, b, t in doc["built_arcs"]},
                built_links={(i, a, b) for i, a, b in doc["built_links"]},
                reductions={
                    section_key(*r["section"]): (int(r.get("time", 0)), int(r.get("headway", 0)))
                    for r in doc.get("reductions", [])
                },
                routes={
                    TrainKey(r["scenario"], r["train"]): Route(
                        tuple(r["nodes"]), tuple(int(t) for t in r["tracks"]), tuple((int(d), int(a)) for d, a in r["times"])
                    )
                    for r in doc["routes"]
                },
                active_scenarios=set(doc["active_scenarios"]),
                active_trains={TrainKey(s, t) for s, t in doc["active_trains"]},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ExtractionError(f"malformed plan document: {exc}") from exc


def _as_int(value, name: str, tol: float) -> int:
    nearest = round(Fraction(value))
    if abs(Fraction(value) - nearest) > tol:
        raise ExtractionError(f"{name} = {value} is not integral")
    return int(nearest)


def _train_key(tag: str, model: MilpModel, family: TimetableFamily) -> TrainKey:
    if model.qualified_trains:
        scenario, _, train = tag.partition("/")
        return TrainKey(scenario, train)
    return TrainKey(family.scenarios[0].id, tag)


def extract_plan(
    solution: MilpSolution, model: MilpModel, family: TimetableFamily, *, tolerance: float = 1e-6
) -> PlanSolution:
    """Read the network, routes and timetable off a model solution."""
    if solution.values is None:
        raise ExtractionError(f"no solution values (status {solution.status.value})")
    plan = PlanSolution()
    arcs: dict[TrainKey, dict[str, tuple[str, int]]] = defaultdict(dict)
    times: dict[tuple[TrainKey, str, str, int], list[int]] = defaultdict(lambda: [0, 0])
    red: dict[tuple[str, str], list[int]] = defaultdict(lambda: [0, 0])
    seen_activation = False
    for var in model.variables:
        m = _NAME_RE.match(var.name)
        if not m:
            continue
        kind, args = m.group(1), m.group(2).split(",")
        val = _as_int(solution.values[var.id], var.name, tolerance)
        if kind == "y" and val:
            plan.built_arcs.add((args[0], args[1], int(args[2])))
        elif kind == "l" and val:
            plan.built_links.add((args[0], args[1], args[2]))
        elif kind == "r_time":
            red[section_key(args[0], args[1])][0] = val
        elif kind == "r_mht":
            red[section_key(args[0], args[1])][1] = val
        elif kind == "x" and val:
            key = _train_key(args[0], model, family)
            arcs[key][args[1]] = (args[2], int(args[3]))
        elif kind in ("d", "a"):
            key = _train_key(args[0], model, family)
            times[(key, args[1], args[2], int(args[3]))][0 if kind == "d" else 1] = val
        elif kind == "o_szo":
            seen_activation = True
            if val:
                plan.active_scenarios.add(args[0])
        elif kind == "o_train" and val:
            plan.active_trains.add(_train_key(args[0], model, family))
    if not seen_activation:
        plan.active_scenarios = {sc.id for sc in family.scenarios}
        plan.active_trains = set(family.train_keys())
    plan.reductions = {s: (t, h) for s, (t, h) in sorted(red.items())}

    for key in sorted(arcs):
        train = family.train(key)
        out = arcs[key]
        nodes, tracks, tt = [train.origin], [], []
        while nodes[-1] in out and len(nodes) <= len(out):
            i = nodes[-1]
            j, tr = out[i]
            nodes.append(j)
            tracks.append(tr)
            tt.append(tuple(times[(key, i, j, tr)]))
        if len(tracks) != len(out):
            raise ExtractionError(f"train {key}: selected arcs do not form one path from {train.origin}")
        plan.routes[key] = Route(tuple(nodes), tuple(tracks), tuple(tt))
    return plan
