"""Path catalog, relevant train-arc combinations and headway succession cases."""

from __future__ import annotations

import enum
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, NamedTuple

from railnet.core import (
    BuildConfig,
    InfrastructureSpec,
    InstanceError,
    TimetableFamily,
    Train,
    TrainKey,
    link_key,
    reduced_time,
    relation_nodes,
    section_key,
    shortest_times,
    time_reduction_cap,
    usable_tracks,
)

log = logging.getLogger(__name__)


class InfeasibleInstanceError(InstanceError):
    """Some mandatory train has no admissible path."""

    def __init__(self, trains: list[TrainKey]):
        self.trains = trains
        super().__init__("no admissible path for train(s): " + ", ".join(map(str, trains)))


@dataclass(frozen=True)
class Path:
    key: tuple[str, str, str]
    nodes: tuple[str, ...]
    min_time: int

    @property
    def sections(self) -> tuple[tuple[str, str], ...]:
        """Directed node pairs in travel order."""
        return tuple(zip(self.nodes, self.nodes[1:]))

    @property
    def links(self) -> tuple[tuple[str, str, str], ...]:
        return tuple(link_key(i, a, b) for a, i, b in zip(self.nodes, self.nodes[1:], self.nodes[2:]))

    @property
    def section_indicators(self) -> frozenset[tuple[str, str]]:
        return frozenset(self.sections)

    @property
    def link_indicators(self) -> frozenset[tuple[str, str, str]]:
        return frozenset(self.links)


def enumerate_paths(
    spec: InfrastructureSpec,
    origin: str,
    destination: str,
    train_type: str,
    time_budget: int,
    via_nodes: frozenset[str] | set[str] = frozenset(),
    *,
    assume_max_reductions: bool = True,
    max_paths: int = 64,
) -> list[Path]:
    """All simple paths within the time budget that visit every via node.

    Interior transitions need a declared node link. Paths are ordered by minimal
    travel time, then node sequence; beyond ``max_paths`` only the fastest are kept.
    """
    for n in (origin, destination, *via_nodes):
        if n not in spec.node_map:
            raise InstanceError(f"unknown node {n!r}")
    to_dest = shortest_times(spec, train_type, destination, assume_max_reductions)
    if origin not in to_dest:
        return []
    vias = frozenset(via_nodes)
    found: list[Path] = []
    key = (origin, destination, train_type)

    def extend(nodes: list[str], elapsed: int) -> None:
        u = nodes[-1]
        if u == destination:
            if vias <= set(nodes):
                found.append(Path(key, tuple(nodes), elapsed))
            return
        for v in spec.neighbors[u]:
            if v in nodes or v not in to_dest:
                continue
            if len(nodes) >= 2 and not spec.has_link(u, nodes[-2], v):
                continue
            t = reduced_time(spec.section(u, v), train_type, assume_max_reductions)
            if t is None or elapsed + t + to_dest[v] > time_budget:
                continue
            nodes.append(v)
            extend(nodes, elapsed + t)
            nodes.pop()

    extend([origin], 0)
    found.sort(key=lambda p: (p.min_time, p.nodes))
    if len(found) > max_paths:
        log.warning(
            "%d paths for %s->%s (%s); keeping the %d fastest",
            len(found), origin, destination, train_type, max_paths,
        )
        found = found[:max_paths]
    return found


def build_path_catalog(
    family: TimetableFamily, spec: InfrastructureSpec, config: BuildConfig
) -> dict[TrainKey, list[Path]]:
    """Paths per train. Nodes named by the train's timing relations act as extra via nodes."""
    cache: dict[tuple, list[Path]] = {}
    catalog: dict[TrainKey, list[Path]] = {}
    for sc in family.scenarios:
        for t in sc.trains:
            vias = t.via_nodes | relation_nodes(sc, t.id)
            ck = (t.origin, t.destination, t.train_type, vias, t.budget)
            if ck not in cache:
                cache[ck] = enumerate_paths(
                    spec, t.origin, t.destination, t.train_type, t.budget, vias,
                    assume_max_reductions=config.reductions_allowed,
                    max_paths=config.max_paths_per_triple,
                )
            catalog[TrainKey(sc.id, t.id)] = cache[ck]
    return catalog


class XKey(NamedTuple):
    train: TrainKey
    i: str
    j: str
    track: int


@dataclass(frozen=True)
class DepartureWindow:
    train: Hashable
    arc: tuple[str, str, int]
    lb: int
    ub: int


class _TimeTable:
    """Memoised shortest travel times per (train type, source)."""

    def __init__(self, spec: InfrastructureSpec, reduce: bool):
        self.spec = spec
        self.reduce = reduce
        self._cache: dict[tuple[str, str], dict[str, int]] = {}

    def __call__(self, train_type: str, source: str, target: str) -> int | None:
        k = (train_type, source)
        if k not in self._cache:
            self._cache[k] = shortest_times(self.spec, train_type, source, self.reduce)
        return self._cache[k].get(target)


def departure_window(
    train: Train,
    arc: tuple[str, str, int],
    spec: InfrastructureSpec,
    config: BuildConfig,
    *,
    _times: _TimeTable | None = None,
    key: Hashable | None = None,
) -> DepartureWindow:
    """Earliest and latest departure of ``train`` onto the directed arc, assuming maximal reductions."""
    i, j, _tr = arc
    times = _times or _TimeTable(spec, config.reductions_allowed)
    reduce = config.reductions_allowed
    to_i = times(train.train_type, train.origin, i)
    from_j = times(train.train_type, j, train.destination)
    run = reduced_time(spec.section(i, j), train.train_type, reduce)
    if to_i is None or from_j is None or run is None:
        return DepartureWindow(key or train.id, arc, 1, 0)
    lb = train.earliest_departure + to_i
    ub = train.latest_arrival - run - from_j
    return DepartureWindow(key or train.id, arc, lb, ub)


@dataclass(frozen=True)
class RelevantSets:
    paths: dict[TrainKey, tuple[Path, ...]]
    x: tuple[XKey, ...]
    arcs: tuple[tuple[str, str, int], ...]
    links: tuple[tuple[str, str, str], ...]
    sections: tuple[tuple[str, str], ...]
    nodes: tuple[str, ...]
    windows: dict[XKey, DepartureWindow]
    pathless: tuple[TrainKey, ...] = ()


def build_relevant_sets(
    family: TimetableFamily,
    spec: InfrastructureSpec,
    config: BuildConfig,
    catalog: dict[TrainKey, list[Path]] | None = None,
) -> RelevantSets:
    if catalog is None:
        catalog = build_path_catalog(family, spec, config)
    times = _TimeTable(spec, config.reductions_allowed)
    x: set[XKey] = set()
    windows: dict[XKey, DepartureWindow] = {}
    paths: dict[TrainKey, tuple[Path, ...]] = {}
    pathless: list[TrainKey] = []
    for key in family.train_keys():
        train = family.train(key)
        kept = []
        for path in catalog.get(key, []):
            entries = []
            for i, j in path.sections:
                sec = spec.section(i, j)
                w = departure_window(train, (i, j, 0), spec, config, _times=times, key=key)
                if w.lb > w.ub:
                    break
                for tr in usable_tracks(sec, i, j, config):
                    xk = XKey(key, i, j, tr)
                    entries.append(xk)
                    windows[xk] = DepartureWindow(key, (i, j, tr), w.lb, w.ub)
            else:
                kept.append(path)
                x.update(entries)
        paths[key] = tuple(kept)
        if not kept:
            pathless.append(key)
    if pathless and family.is_deterministic:
        raise InfeasibleInstanceError(pathless)

    arcs: set[tuple[str, str, int]] = set()
    for xk in x:
        u, v = section_key(xk.i, xk.j)
        # track 2 precedes 3 and 4, track 1 precedes 2
        arcs.update((u, v, t) for t in range(1, min(xk.track, 2) + 1))
        arcs.add((u, v, xk.track))
    links = {lk for ps in paths.values() for p in ps for lk in p.links}
    sections = {(u, v) for u, v, _ in arcs}
    nodes = {n for s in sections for n in s}
    return RelevantSets(
        paths=paths,
        x=tuple(sorted(x)),
        arcs=tuple(sorted(arcs)),
        links=tuple(sorted(links)),
        sections=tuple(sorted(sections)),
        nodes=tuple(sorted(nodes)),
        windows={k: windows[k] for k in sorted(windows) if k in x},
        pathless=tuple(pathless),
    )


class CaseKind(enum.Enum):
    IMPLICIT = "implicit"
    FIXED_ORDER = "fixed_order"
    FREE_ORDER = "free_order"
    CONFLICT = "conflict"


class Geometry(enum.Enum):
    FOLLOWING = "following"
    CROSSING = "crossing"


@dataclass(frozen=True)
class HeadwayCase:
    variant: CaseKind
    geometry: Geometry
    first: Hashable | None = None
    second: Hashable | None = None

    def __post_init__(self) -> None:
        if self.variant is CaseKind.CONFLICT and self.geometry is not Geometry.CROSSING:
            raise ValueError("conflicts only arise between opposing trains")


def classify_headway_pair(
    k1: Hashable,
    k2: Hashable,
    w1: tuple[int, int],
    w2: tuple[int, int],
    geometry: Geometry,
    sep_12: int,
    sep_21: int,
    run_1: tuple[int, int] = (0, 0),
    run_2: tuple[int, int] = (0, 0),
) -> HeadwayCase:
    """Compare departure windows of two trains sharing one track.

    Following: ``sep_12`` is the headway when k1 leads, ``sep_21`` when k2 leads.
    Crossing: k1 runs i->j, k2 runs j->i; ``sep_12`` is the crossing time at j (k2 leaves
    after k1 arrived), ``sep_21`` the one at i; ``run_*`` are (fastest, slowest) run times.
    """
    (lb1, ub1), (lb2, ub2) = w1, w2
    if geometry is Geometry.FOLLOWING:
        if lb2 - ub1 >= sep_12:
            return HeadwayCase(CaseKind.IMPLICIT, geometry, k1, k2)
        if lb1 - ub2 >= sep_21:
            return HeadwayCase(CaseKind.IMPLICIT, geometry, k2, k1)
        if ub1 < lb2:
            return HeadwayCase(CaseKind.FIXED_ORDER, geometry, k1, k2)
        if ub2 < lb1:
            return HeadwayCase(CaseKind.FIXED_ORDER, geometry, k2, k1)
        return HeadwayCase(CaseKind.FREE_ORDER, geometry)

    if lb2 - (ub1 + run_1[1]) >= sep_12:
        return HeadwayCase(CaseKind.IMPLICIT, geometry, k1, k2)
    if lb1 - (ub2 + run_2[1]) >= sep_21:
        return HeadwayCase(CaseKind.IMPLICIT, geometry, k2, k1)
    # k1 first needs k2 to leave j after k1 arrived there, and vice versa at i
    k1_first = ub2 >= lb1 + run_1[0] + sep_12
    k2_first = ub1 >= lb2 + run_2[0] + sep_21
    if k1_first and k2_first:
        return HeadwayCase(CaseKind.FREE_ORDER, geometry)
    if k1_first:
        return HeadwayCase(CaseKind.FIXED_ORDER, geometry, k1, k2)
    if k2_first:
        return HeadwayCase(CaseKind.FIXED_ORDER, geometry, k2, k1)
    return HeadwayCase(CaseKind.CONFLICT, geometry)


class HKey(NamedTuple):
    """(i, j, track, k1, k2): k1 runs i->j; k2 runs i->j (following) or j->i (crossing)."""

    i: str
    j: str
    track: int
    k1: TrainKey
    k2: TrainKey


@dataclass(frozen=True)
class HeadwaySets:
    P_f: tuple[HKey, ...] = ()
    P_c: tuple[HKey, ...] = ()
    O_f: tuple[HKey, ...] = ()
    O_c: tuple[HKey, ...] = ()
    H_f: tuple[HKey, ...] = ()
    H_c: tuple[HKey, ...] = ()
    C_c: tuple[HKey, ...] = ()
    # pairs whose separation holds by their windows alone (leader first)
    implicit: tuple[HKey, ...] = field(default=())

    def counts(self) -> dict[str, int]:
        return {n: len(getattr(self, n)) for n in ("P_f", "P_c", "O_f", "O_c", "H_f", "H_c", "C_c", "implicit")}


def _flip(h: HKey) -> HKey:
    """Same crossing pair seen from the other train."""
    return HKey(h.j, h.i, h.track, h.k2, h.k1)


def build_headway_sets(
    family: TimetableFamily, rel: RelevantSets, spec: InfrastructureSpec, config: BuildConfig
) -> HeadwaySets:
    by_arc: dict[tuple[str, str, int], list[XKey]] = defaultdict(list)
    for xk in rel.x:
        u, v = section_key(xk.i, xk.j)
        by_arc[(u, v, xk.track)].append(xk)

    out: dict[str, set[HKey]] = {n: set() for n in HeadwaySets.__dataclass_fields__}
    for (u, v, tr), entries in sorted(by_arc.items()):
        sec = spec.section(u, v)
        t_cap = time_reduction_cap(sec, config)
        for a_idx, xa in enumerate(entries):
            for xb in entries[a_idx + 1:]:
                if xa.train == xb.train:
                    continue
                if xa.train.scenario != xb.train.scenario and not config.cross_scenario_headways:
                    continue
                x1, x2 = sorted((xa, xb), key=lambda e: e.train)
                _place_pair(x1, x2, family, rel, spec, sec, t_cap, out)
    return HeadwaySets(**{n: tuple(sorted(s)) for n, s in out.items()})


def _place_pair(x1, x2, family, rel, spec, sec, t_cap, out) -> None:
    t1, t2 = family.train(x1.train), family.train(x2.train)
    w1 = rel.windows[x1]
    w2 = rel.windows[x2]
    k1, k2 = x1.train, x2.train
    if (x1.i, x1.j) == (x2.i, x2.j):
        geometry = Geometry.FOLLOWING
        # unreduced headways: the pair stays implicit whatever reduction is bought
        sep_12 = sec.base_headway[(t1.train_type, t2.train_type)]
        sep_21 = sec.base_headway[(t2.train_type, t1.train_type)]
        case = classify_headway_pair(k1, k2, (w1.lb, w1.ub), (w2.lb, w2.ub), geometry, sep_12, sep_21)
    else:
        geometry = Geometry.CROSSING
        tt1, tt2 = sec.travel_time[t1.train_type], sec.travel_time[t2.train_type]
        sep_12 = spec.node_map[x1.j].crossing_time_minutes
        sep_21 = spec.node_map[x1.i].crossing_time_minutes
        case = classify_headway_pair(
            k1, k2, (w1.lb, w1.ub), (w2.lb, w2.ub), geometry, sep_12, sep_21,
            (tt1 - t_cap, tt1), (tt2 - t_cap, tt2),
        )
    base = HKey(x1.i, x1.j, x1.track, k1, k2)
    if geometry is Geometry.FOLLOWING:
        flipped = HKey(x1.i, x1.j, x1.track, k2, k1)
        p, o, h = "P_f", "O_f", "H_f"
    else:
        flipped = _flip(base)
        p, o, h = "P_c", "O_c", "H_c"
    ordered = base if case.first == k1 else flipped
    if case.variant is CaseKind.IMPLICIT:
        out["implicit"].add(ordered)
    elif case.variant is CaseKind.FIXED_ORDER:
        out[o].add(ordered)
        out[h].add(ordered)
    elif case.variant is CaseKind.FREE_ORDER:
        out[p].add(base)
        out[h].update((base, flipped))
    else:
        out["C_c"].add(base)
