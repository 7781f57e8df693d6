"""Seeded synthetic instances at oracle or stress scale."""

from __future__ import annotations

import random
import string
from dataclasses import dataclass, field

from railnet.core import (
    BuildConfig,
    InfrastructureSpec,
    Node,
    NodeLink,
    RelationKind,
    Scenario,
    Section,
    TimetableFamily,
    TimingRelation,
    Train,
    min_travel_time,
)
from railnet.instance import document_from_instance


@dataclass(frozen=True)
class GeneratorParams:
    nodes: int = 5
    # total sections; defaults to a spanning tree plus one extra section
    sections: int | None = None
    trains_per_type: dict[str, int] = field(default_factory=lambda: {"G": 2, "F": 1})
    scenarios: int = 1
    optional_share: float = 0.0
    horizon: int = 120
    max_tracks: int = 2
    coverage_share: float = 1.0
    relation_probability: float = 0.3
    slack: tuple[int, int] = (0, 20)
    config: str = "B"
    # scenario penalties; kept below one unit of building cost
    scenario_penalty: int = 1
    optional_penalty: tuple[int, int] = (1, 5)


class GeneratorError(ValueError):
    pass


def _node_ids(n: int) -> list[str]:
    if n <= 26:
        return list(string.ascii_uppercase[:n])
    return [f"N{i:03d}" for i in range(n)]


def _check(params: GeneratorParams) -> None:
    if params.nodes < 2:
        raise GeneratorError("need at least two nodes")
    max_sections = params.nodes * (params.nodes - 1) // 2
    if params.sections is not None and not params.nodes - 1 <= params.sections <= max_sections:
        raise GeneratorError(f"sections must lie in [{params.nodes - 1}, {max_sections}] for {params.nodes} nodes")
    if not 1 <= params.max_tracks <= 4:
        raise GeneratorError("max_tracks must lie in [1, 4]")
    if not 0 <= params.optional_share <= 1:
        raise GeneratorError("optional_share must lie in [0, 1]")
    if not 0 < params.coverage_share <= 1:
        raise GeneratorError("coverage_share must lie in (0, 1]")
    if params.scenarios < 1 or params.horizon < 20:
        raise GeneratorError("need at least one scenario and a horizon of 20 minutes")
    if any(n < 0 for n in params.trains_per_type.values()):
        raise GeneratorError("train counts must be nonnegative")


def _infrastructure(rng: random.Random, params: GeneratorParams) -> InfrastructureSpec:
    ids = _node_ids(params.nodes)
    types = sorted(params.trains_per_type)
    nodes = tuple(Node(i, max_stop_minutes=rng.randint(2, 6), crossing_time_minutes=rng.randint(0, 2)) for i in ids)
    pairs = set()
    order = ids[:]
    rng.shuffle(order)
    for k in range(1, len(order)):
        pairs.add(tuple(sorted((order[k], rng.choice(order[:k])))))
    target = params.sections if params.sections is not None else min(len(ids), len(ids) * (len(ids) - 1) // 2)
    candidates = sorted({tuple(sorted((a, b))) for a in ids for b in ids if a < b} - pairs)
    rng.shuffle(candidates)
    while len(pairs) < target and candidates:
        pairs.add(candidates.pop())

    sections = []
    for u, v in sorted(pairs):
        length = rng.randint(5, 24)
        base = max(3, length // 2 + rng.randint(0, 2))
        travel = {}
        for n, tt in enumerate(types):
            travel[tt] = base + n * rng.randint(1, 3)
        headway = {(a, b): rng.randint(3, 5) for a in types for b in types}
        km_cap = length // 10
        tracks = rng.randint(max(1, min(2, params.max_tracks)), params.max_tracks)
        track_cost = {1: 10 * rng.randint(10, 30)}
        for tr in range(2, tracks + 1):
            track_cost[tr] = 10 * rng.randint(10, 30)
        sections.append(
            Section(
                endpoints=(u, v),
                length_km=length,
                max_tracks=tracks,
                travel_time=travel,
                base_headway=headway,
                track_cost=track_cost,
                time_reduction_cost=10 * rng.randint(3, 8),
                headway_reduction_cost=10 * rng.randint(3, 8),
                max_time_reduction=min(km_cap, 1),
                max_headway_reduction=min(km_cap, 1),
            )
        )
    adj: dict[str, list[str]] = {i: [] for i in ids}
    for u, v in pairs:
        adj[u].append(v)
        adj[v].append(u)
    links = []
    for at in ids:
        nb = sorted(adj[at])
        for x in range(len(nb)):
            for y in range(x + 1, len(nb)):
                links.append(NodeLink(at, nb[x], nb[y], 10 * rng.randint(0, 3)))
    return InfrastructureSpec(nodes, tuple(sections), tuple(links))


def _scenario(rng: random.Random, params: GeneratorParams, spec: InfrastructureSpec, sid: str) -> Scenario:
    ids = [n.id for n in spec.nodes]
    trains = []
    counter = 1
    for tt in sorted(params.trains_per_type):
        for _ in range(params.trains_per_type[tt]):
            for _attempt in range(50):
                o, e = rng.sample(ids, 2)
                t = min_travel_time(spec, tt, o, e)
                dep = rng.randint(0, max(0, params.horizon // 3))
                slack = rng.randint(*params.slack)
                if t is not None and dep + t + slack <= params.horizon:
                    break
            else:
                raise GeneratorError(f"horizon {params.horizon} too short for the generated network")
            trains.append(Train(f"k{counter}", tt, o, e, dep, dep + t + slack))
            counter += 1
    n_opt = round(params.optional_share * len(trains))
    opt_ids = set(rng.sample([t.id for t in trains], n_opt)) if n_opt else set()
    trains = [
        Train(t.id, t.train_type, t.origin, t.destination, t.earliest_departure, t.latest_arrival,
              optional=True, penalty=rng.randint(*params.optional_penalty))
        if t.id in opt_ids else t
        for t in trains
    ]
    relations = []
    mandatory = [t for t in trains if not t.optional]
    for a in range(len(mandatory)):
        for b in range(a + 1, len(mandatory)):
            t1, t2 = mandatory[a], mandatory[b]
            if t1.origin == t2.origin and rng.random() < params.relation_probability:
                gap = t2.earliest_departure - t1.earliest_departure
                relations.append(
                    TimingRelation(RelationKind.DEPARTURE_FREQUENCY, t1.id, t2.id, t1.origin, gap - 10, gap + 10)
                )
            elif t1.destination == t2.origin and t2.earliest_departure >= t1.latest_arrival and rng.random() < params.relation_probability:
                relations.append(TimingRelation(RelationKind.TRANSFER, t1.id, t2.id, t1.destination, 0, params.horizon))
    return Scenario(sid, tuple(trains), tuple(relations), penalty=params.scenario_penalty if params.scenarios > 1 else 0)


def generate_family(seed: int, params: GeneratorParams | None = None):
    """``(spec, family, config)`` for ``seed``; identical for identical inputs."""
    params = params or GeneratorParams()
    _check(params)
    rng = random.Random(seed)
    spec = _infrastructure(rng, params)
    scenarios = tuple(_scenario(rng, params, spec, f"s{n + 1}") for n in range(params.scenarios))
    family = TimetableFamily(scenarios, params.coverage_share)
    return spec, family, BuildConfig.preset(params.config)


def generate_instance(seed: int, params: GeneratorParams | None = None) -> dict:
    """Instance document for ``seed``."""
    return document_from_instance(*generate_family(seed, params))
