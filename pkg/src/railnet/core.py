"""Domain model: infrastructure multigraph, operational concept, scenarios, build configuration."""

from __future__ import annotations

import enum
import heapq
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterator, NamedTuple

Cost = int | Fraction

IDENT_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_]*$")
MAX_TRACKS = 4


def as_fraction(value) -> Fraction:
    """Exact decimal reading of JSON-ish numbers (``0.4`` -> 2/5)."""
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


class InstanceError(ValueError):
    """Raised for references to unknown nodes or otherwise unusable input."""


class Direction(enum.Enum):
    ASCENDING = "ascending"
    DESCENDING = "descending"


def direction_of(i: str, j: str) -> Direction:
    return Direction.ASCENDING if i < j else Direction.DESCENDING


def section_key(i: str, j: str) -> tuple[str, str]:
    return (i, j) if i < j else (j, i)


def allowed_tracks(direction: Direction, max_tracks: int) -> frozenset[int]:
    """Track-choice rule: ascending trains use odd tracks, descending trains track 1 or even tracks."""
    if not 1 <= max_tracks <= MAX_TRACKS:
        raise ValueError(f"max_tracks must be in [1, {MAX_TRACKS}], got {max_tracks}")
    if direction is Direction.ASCENDING:
        return frozenset(t for t in (1, 3) if t <= max_tracks)
    return frozenset(t for t in (1, 2, 4) if t <= max_tracks)


@dataclass(frozen=True)
class Node:
    id: str
    max_stop_minutes: int = 0
    crossing_time_minutes: int = 0


@dataclass(frozen=True)
class Section:
    endpoints: tuple[str, str]
    length_km: Fraction
    max_tracks: int
    travel_time: dict[str, int]
    # (leading type, following type) -> minutes
    base_headway: dict[tuple[str, str], int]
    track_cost: dict[int, Cost]
    time_reduction_cost: Cost = 0
    headway_reduction_cost: Cost = 0
    max_time_reduction: int | None = None
    max_headway_reduction: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "endpoints", section_key(*self.endpoints))
        object.__setattr__(self, "length_km", as_fraction(self.length_km))
        if self.max_time_reduction is None:
            object.__setattr__(self, "max_time_reduction", self.km_cap)
        if self.max_headway_reduction is None:
            object.__setattr__(self, "max_headway_reduction", self.km_cap)

    @property
    def key(self) -> tuple[str, str]:
        return self.endpoints

    @property
    def km_cap(self) -> int:
        # one minute per ten km
        return math.floor(self.length_km / 10)


@dataclass(frozen=True)
class NodeLink:
    """Through-movement a -> at -> b without reversal; usable in both senses."""

    at: str
    a: str
    b: str
    cost: Cost = 0

    def __post_init__(self) -> None:
        a, b = section_key(self.a, self.b)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.at, self.a, self.b)


def link_key(at: str, a: str, b: str) -> tuple[str, str, str]:
    a, b = section_key(a, b)
    return (at, a, b)


@dataclass(frozen=True)
class InfrastructureSpec:
    nodes: tuple[Node, ...]
    sections: tuple[Section, ...]
    links: tuple[NodeLink, ...] = ()

    @cached_property
    def node_map(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def section_map(self) -> dict[tuple[str, str], Section]:
        return {s.key: s for s in self.sections}

    @cached_property
    def link_map(self) -> dict[tuple[str, str, str], NodeLink]:
        return {l.key: l for l in self.links}

    @cached_property
    def neighbors(self) -> dict[str, tuple[str, ...]]:
        adj: dict[str, set[str]] = {n.id: set() for n in self.nodes}
        for s in self.sections:
            u, v = s.key
            adj.setdefault(u, set()).add(v)
            adj.setdefault(v, set()).add(u)
        return {n: tuple(sorted(vs)) for n, vs in adj.items()}

    def section(self, i: str, j: str) -> Section:
        return self.section_map[section_key(i, j)]

    def has_link(self, at: str, a: str, b: str) -> bool:
        return link_key(at, a, b) in self.link_map

    def max_headway(self) -> int:
        return max((h for s in self.sections for h in s.base_headway.values()), default=0)

    def max_crossing_time(self) -> int:
        return max((n.crossing_time_minutes for n in self.nodes), default=0)


class RelationKind(enum.Enum):
    ARRIVAL_FREQUENCY = "arrival_frequency"
    DEPARTURE_FREQUENCY = "departure_frequency"
    TRANSFER = "transfer"


@dataclass(frozen=True)
class Train:
    id: str
    train_type: str
    origin: str
    destination: str
    earliest_departure: int
    latest_arrival: int
    via_nodes: frozenset[str] = frozenset()
    optional: bool = False
    penalty: Cost = 0

    @property
    def budget(self) -> int:
        return self.latest_arrival - self.earliest_departure


@dataclass(frozen=True)
class TimingRelation:
    """Bounds ``second - first`` on arrivals, departures, or arrival(first) -> departure(second)."""

    kind: RelationKind
    first: str
    second: str
    node: str
    min_minutes: int
    max_minutes: int


@dataclass(frozen=True)
class Scenario:
    id: str
    trains: tuple[Train, ...]
    relations: tuple[TimingRelation, ...] = ()
    penalty: Cost = 0
    demanded_optional: int = 0
    chosen_optional: frozenset[str] = frozenset()

    @cached_property
    def train_map(self) -> dict[str, Train]:
        return {t.id: t for t in self.trains}

    def is_mandatory(self, train_id: str) -> bool:
        t = self.train_map[train_id]
        return not t.optional or train_id in self.chosen_optional

    @property
    def has_free_optional(self) -> bool:
        return any(not self.is_mandatory(t.id) for t in self.trains)


class TrainKey(NamedTuple):
    scenario: str
    train: str

    def __str__(self) -> str:
        return f"{self.scenario}/{self.train}"


@dataclass(frozen=True)
class TimetableFamily:
    scenarios: tuple[Scenario, ...]
    coverage_share: Fraction = Fraction(1)

    def __post_init__(self) -> None:
        object.__setattr__(self, "coverage_share", as_fraction(self.coverage_share))

    @cached_property
    def scenario_map(self) -> dict[str, Scenario]:
        return {s.id: s for s in self.scenarios}

    @property
    def is_deterministic(self) -> bool:
        """One scenario, full coverage and no free optional trains."""
        return (
            len(self.scenarios) == 1
            and self.coverage_share == 1
            and not self.scenarios[0].has_free_optional
        )

    def required_scenarios(self) -> int:
        return math.ceil(self.coverage_share * len(self.scenarios))

    def train_keys(self) -> Iterator[TrainKey]:
        for s in self.scenarios:
            for t in s.trains:
                yield TrainKey(s.id, t.id)

    def train(self, key: TrainKey) -> Train:
        return self.scenario_map[key.scenario].train_map[key.train]

    def with_coverage(self, share: Fraction | float | str) -> TimetableFamily:
        return TimetableFamily(self.scenarios, as_fraction(share))

    def horizon(self) -> int:
        return max((t.latest_arrival for s in self.scenarios for t in s.trains), default=0)


@dataclass(frozen=True)
class BuildConfig:
    max_tracks_global: int = 2
    reductions_allowed: bool = True
    headway_floor_minutes: int = 2
    planning_horizon_end_minutes: int | None = None
    cross_scenario_headways: bool = False
    track_rules: bool = True
    max_paths_per_triple: int = 64

    @classmethod
    def preset(cls, name: str, **overrides) -> BuildConfig:
        presets = {"A": (4, True), "B": (2, True), "C": (2, False)}
        try:
            tracks, reductions = presets[name.upper()]
        except KeyError:
            raise ValueError(f"unknown configuration {name!r}; expected A, B or C") from None
        return cls(max_tracks_global=tracks, reductions_allowed=reductions, **overrides)


def effective_max_tracks(section: Section, config: BuildConfig) -> int:
    return min(section.max_tracks, config.max_tracks_global)


def usable_tracks(section: Section, i: str, j: str, config: BuildConfig) -> tuple[int, ...]:
    """Tracks a train may use when travelling i -> j on ``section``."""
    m = effective_max_tracks(section, config)
    if not config.track_rules:
        return tuple(range(1, m + 1))
    return tuple(sorted(allowed_tracks(direction_of(i, j), m)))


def time_reduction_cap(section: Section, config: BuildConfig) -> int:
    if not config.reductions_allowed:
        return 0
    slowest_floor = min(section.travel_time.values(), default=1) - 1
    return max(0, min(section.max_time_reduction, slowest_floor))


def headway_reduction_cap(section: Section, config: BuildConfig) -> int:
    if not config.reductions_allowed:
        return 0
    min_pair = min(section.base_headway.values(), default=config.headway_floor_minutes)
    cap = min(section.max_headway_reduction, section.km_cap, min_pair - config.headway_floor_minutes)
    return max(0, cap)


def reduced_time(section: Section, train_type: str, assume_max_reductions: bool) -> int | None:
    """Travel time on a section, optionally minus the section's maximal time reduction."""
    t = section.travel_time.get(train_type)
    if t is None or not assume_max_reductions:
        return t
    return t - max(0, min(section.max_time_reduction, t - 1))


def min_travel_time(
    spec: InfrastructureSpec,
    train_type: str,
    source: str,
    target: str,
    assume_max_reductions: bool = False,
) -> int | None:
    """Shortest travel time between two nodes for a train type, ``None`` when unreachable.

    With ``assume_max_reductions`` every section contributes its travel time minus the
    section's maximal time reduction.
    """
    return shortest_times(spec, train_type, source, assume_max_reductions).get(target)


def shortest_times(
    spec: InfrastructureSpec, train_type: str, source: str, assume_max_reductions: bool = False
) -> dict[str, int]:
    if source not in spec.node_map:
        raise InstanceError(f"unknown node {source!r}")
    dist = {source: 0}
    heap = [(0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v in spec.neighbors.get(u, ()):
            sec = spec.section(u, v)
            t = reduced_time(sec, train_type, assume_max_reductions)
            if t is None:
                continue
            nd = d + t
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


@dataclass(frozen=True)
class Diagnostic:
    code: str
    location: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.code} at {self.location}" + (f": {self.detail}" if self.detail else "")


def validate_instance(
    spec: InfrastructureSpec, family: TimetableFamily, config: BuildConfig | None = None
) -> list[Diagnostic]:
    """Check every type invariant; returns one diagnostic per violation, sorted."""
    config = config or BuildConfig()
    out: set[Diagnostic] = set()

    def bad(code: str, where: str, detail: str = "") -> None:
        out.add(Diagnostic(code, where, detail))

    node_ids = [n.id for n in spec.nodes]
    if len(set(node_ids)) != len(node_ids):
        for nid in sorted({n for n in node_ids if node_ids.count(n) > 1}):
            bad("duplicate node", f"node {nid}")
    nodes = set(node_ids)
    for n in spec.nodes:
        if not IDENT_RE.match(n.id):
            bad("bad identifier", f"node {n.id}")
        if n.max_stop_minutes < 0 or n.crossing_time_minutes < 0:
            bad("negative duration", f"node {n.id}")

    seen_sections: set[tuple[str, str]] = set()
    for s in spec.sections:
        where = f"section {s.key[0]}-{s.key[1]}"
        if s.key in seen_sections:
            bad("duplicate section", where)
        seen_sections.add(s.key)
        if s.key[0] == s.key[1]:
            bad("degenerate section", where)
        for e in s.key:
            if e not in nodes:
                bad("unknown node", where, e)
        if s.length_km <= 0:
            bad("nonpositive length", where)
        if not 1 <= s.max_tracks <= MAX_TRACKS:
            bad("track count", where, f"max_tracks={s.max_tracks}")
        else:
            missing = [t for t in range(1, s.max_tracks + 1) if t not in s.track_cost]
            if missing:
                bad("missing track cost", where, f"tracks {missing}")
        if any(c < 0 for c in s.track_cost.values()) or s.time_reduction_cost < 0 or s.headway_reduction_cost < 0:
            bad("negative cost", where)
        if any(t <= 0 for t in s.travel_time.values()):
            bad("nonpositive travel time", where)
        if any(h <= 0 for h in s.base_headway.values()):
            bad("nonpositive headway", where)
        if s.max_time_reduction < 0 or s.max_headway_reduction < 0:
            bad("negative reduction cap", where)
        if s.max_headway_reduction > s.km_cap:
            bad("reduction cap", where, "headway reduction exceeds one minute per ten km")
        if s.base_headway and min(s.base_headway.values()) < config.headway_floor_minutes:
            bad("headway floor", where, f"base headway below floor {config.headway_floor_minutes}")
        if s.travel_time and s.max_time_reduction >= min(s.travel_time.values()):
            bad("reduction cap", where, "time reduction would make travel time nonpositive")

    for l in spec.links:
        where = f"link {l.at}:{l.a}-{l.b}"
        if l.a == l.b:
            bad("degenerate link", where)
        if section_key(l.a, l.at) not in seen_sections or section_key(l.at, l.b) not in seen_sections:
            bad("link without sections", where)
        if l.cost < 0:
            bad("negative cost", where)
    link_keys = [l.key for l in spec.links]
    for k in sorted({k for k in link_keys if link_keys.count(k) > 1}):
        bad("duplicate link", f"link {k[0]}:{k[1]}-{k[2]}")

    if nodes and not _connected(spec):
        bad("disconnected network", "infrastructure", "sections do not connect all nodes")

    if not family.scenarios:
        bad("empty family", "family")
    if not 0 < family.coverage_share <= 1:
        bad("coverage share", "family", str(family.coverage_share))
    scen_ids = [s.id for s in family.scenarios]
    for sid in sorted({s for s in scen_ids if scen_ids.count(s) > 1}):
        bad("duplicate scenario", f"scenario {sid}")

    for sc in family.scenarios:
        _validate_scenario(sc, spec, nodes, bad)
    return sorted(out, key=lambda d: (d.location, d.code, d.detail))


def _validate_scenario(sc: Scenario, spec: InfrastructureSpec, nodes: set[str], bad) -> None:
    if not IDENT_RE.match(sc.id):
        bad("bad identifier", f"scenario {sc.id}")
    ids = [t.id for t in sc.trains]
    for tid in sorted({t for t in ids if ids.count(t) > 1}):
        bad("duplicate train", f"scenario {sc.id} train {tid}")
    types_on_sections = {tt for s in spec.sections for tt in s.travel_time}
    for t in sc.trains:
        where = f"scenario {sc.id} train {t.id}"
        if not IDENT_RE.match(t.id) or not IDENT_RE.match(t.train_type):
            bad("bad identifier", where)
        for n in (t.origin, t.destination, *sorted(t.via_nodes)):
            if n not in nodes:
                bad("unknown node", where, n)
        if t.origin == t.destination:
            bad("degenerate train", where)
        if t.earliest_departure >= t.latest_arrival:
            bad("time bounds", where, "earliest departure not before latest arrival")
        if t.earliest_departure < 0:
            bad("time bounds", where, "negative departure")
        if t.origin in t.via_nodes or t.destination in t.via_nodes:
            bad("via endpoint", where)
        if t.penalty < 0:
            bad("negative cost", where)
        if t.train_type not in types_on_sections:
            bad("unknown train type", where, t.train_type)
    optional = {t.id for t in sc.trains if t.optional}
    if sc.demanded_optional < 0 or sc.demanded_optional > len(optional):
        bad("optional count", f"scenario {sc.id}", f"demanded {sc.demanded_optional} of {len(optional)}")
    if not sc.chosen_optional <= optional:
        bad("chosen optional", f"scenario {sc.id}", ",".join(sorted(sc.chosen_optional - optional)))
    if sc.penalty < 0:
        bad("negative cost", f"scenario {sc.id}")
    for r in sc.relations:
        where = f"scenario {sc.id} relation {r.kind.value} {r.first}->{r.second}@{r.node}"
        if r.min_minutes > r.max_minutes:
            bad("relation bounds", where)
        if r.node not in nodes:
            bad("unknown node", where, r.node)
        missing = [k for k in (r.first, r.second) if k not in sc.train_map]
        if missing:
            bad("unknown train", where, ",".join(missing))
            continue
        if r.first == r.second:
            bad("degenerate relation", where)
        if any(not sc.is_mandatory(k) for k in (r.first, r.second)):
            bad("relation on optional train", where)
        t1, t2 = sc.train_map[r.first], sc.train_map[r.second]
        arrives = {RelationKind.ARRIVAL_FREQUENCY: (t1, t2), RelationKind.TRANSFER: (t1,)}.get(r.kind, ())
        departs = {RelationKind.DEPARTURE_FREQUENCY: (t1, t2), RelationKind.TRANSFER: (t2,)}.get(r.kind, ())
        if any(t.origin == r.node for t in arrives):
            bad("relation event", where, "train cannot arrive at its origin")
        if any(t.destination == r.node for t in departs):
            bad("relation event", where, "train cannot depart from its destination")


def _connected(spec: InfrastructureSpec) -> bool:
    ids = [n.id for n in spec.nodes]
    seen = {ids[0]}
    stack = [ids[0]]
    while stack:
        u = stack.pop()
        for v in spec.neighbors.get(u, ()):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen >= set(ids)


def relation_nodes(scenario: Scenario, train_id: str) -> frozenset[str]:
    """Interior nodes a train must visit because a timing relation refers to them."""
    t = scenario.train_map[train_id]
    nodes = {r.node for r in scenario.relations if train_id in (r.first, r.second)}
    return frozenset(nodes - {t.origin, t.destination})
