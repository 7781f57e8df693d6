"""Exhaustive reference optimiser for desk-scale instances.

Independent of the path catalog and the MILP: it enumerates routes and track choices
itself, prices the union network, and decides timetable feasibility exactly on a
disjunctive system of difference constraints.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

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

MAX_NODES = 6
MAX_TRAINS = 6
MAX_SCENARIOS = 3
MAX_HORIZON = 120


class OracleRefusal(ValueError):
    """Instance is beyond the exhaustive search's scale limits."""


@dataclass(frozen=True)
class OracleLimits:
    max_nodes: int = MAX_NODES
    max_trains: int = MAX_TRAINS
    max_scenarios: int = MAX_SCENARIOS
    max_horizon: int = MAX_HORIZON


@dataclass(frozen=True)
class _Option:
    nodes: tuple[str, ...]
    tracks: tuple[int, ...]

    @property
    def arcs(self):
        return tuple((i, j, tr) for (i, j), tr in zip(zip(self.nodes, self.nodes[1:]), self.tracks))

    @property
    def built(self):
        return tuple((*section_key(i, j), tr) for i, j, tr in self.arcs)

    @property
    def links(self):
        return tuple(link_key(n, a, b) for a, n, b in zip(self.nodes, self.nodes[1:], self.nodes[2:]))


# -- difference constraints -------------------------------------------------------------


class _STN:
    """Constraints x[v] - x[u] >= w kept with earliest (longest-path) times from an anchor at 0."""

    ANCHOR = 0

    def __init__(self, n: int):
        self.n = n
        self.out: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        self.dist = [0] * n

    def copy(self) -> _STN:
        c = _STN.__new__(_STN)
        c.n = self.n
        c.out = [list(e) for e in self.out]
        c.dist = list(self.dist)
        return c

    def add(self, u: int, v: int, w: int) -> bool:
        """Add x[v] >= x[u] + w; False when this closes a positive cycle."""
        self.out[u].append((v, w))
        if self.dist[u] + w <= self.dist[v]:
            return True
        self.dist[v] = self.dist[u] + w
        stack = [v]
        while stack:
            a = stack.pop()
            for b, wb in self.out[a]:
                nd = self.dist[a] + wb
                if nd > self.dist[b]:
                    if b == u or b == self.ANCHOR:
                        return False
                    self.dist[b] = nd
                    stack.append(b)
        return True


def _solve_disjunctive(stn: _STN, disjunctions: list) -> list[int] | None:
    """Earliest feasible times, or None. Each disjunction is two alternative (u, v, w) constraints."""
    for (u1, v1, w1), (u2, v2, w2) in disjunctions:
        d = stn.dist
        if d[v1] - d[u1] >= w1 or d[v2] - d[u2] >= w2:
            continue
        for u, v, w in ((u1, v1, w1), (u2, v2, w2)):
            branch = stn.copy()
            if branch.add(u, v, w):
                res = _solve_disjunctive(branch, disjunctions)
                if res is not None:
                    return res
        return None
    return list(stn.dist)


# -- search -----------------------------------------------------------------------------


class _Search:
    def __init__(self, family: TimetableFamily, spec: InfrastructureSpec, config: BuildConfig):
        self.family = family
        self.spec = spec
        self.config = config
        self.time_cap = {s.key: time_reduction_cap(s, config) for s in spec.sections}
        self.mht_cap = {s.key: headway_reduction_cap(s, config) for s in spec.sections}
        self.options = {key: self._options(key) for key in family.train_keys()}
        self.best_cost = None
        self.best_plan: PlanSolution | None = None

    # routes and track choices ------------------------------------------------------
    def _options(self, key: TrainKey) -> list[_Option]:
        sc = self.family.scenario_map[key.scenario]
        train = sc.train_map[key.train]
        must = set(train.via_nodes)
        must |= {r.node for r in sc.relations if key.train in (r.first, r.second)}
        spec, cfg = self.spec, self.config
        routes: list[tuple[str, ...]] = []

        def fastest(i, j):
            sec = spec.section(i, j)
            t = sec.travel_time.get(train.train_type)
            return None if t is None else t - self.time_cap[sec.key]

        def walk(nodes: list[str], elapsed: int) -> None:
            u = nodes[-1]
            if u == train.destination:
                if must <= set(nodes):
                    routes.append(tuple(nodes))
                return
            for v in sorted(spec.neighbors[u]):
                if v in nodes:
                    continue
                if len(nodes) >= 2 and link_key(u, nodes[-2], v) not in spec.link_map:
                    continue
                t = fastest(u, v)
                if t is None or elapsed + t > train.budget:
                    continue
                nodes.append(v)
                walk(nodes, elapsed + t)
                nodes.pop()

        walk([train.origin], 0)
        out = []
        for nodes in routes:
            choices = []
            for i, j in zip(nodes, nodes[1:]):
                m = effective_max_tracks(spec.section(i, j), cfg)
                allowed = allowed_tracks(direction_of(i, j), m) if cfg.track_rules else range(1, m + 1)
                choices.append(sorted(allowed))
            for tracks in itertools.product(*choices):
                out.append(_Option(nodes, tracks))
        return out

    # costs -------------------------------------------------------------------------
    def _closure(self, arcs: set) -> set:
        out = set()
        for u, v, tr in arcs:
            out.add((u, v, tr))
            if tr >= 2:
                out.add((u, v, 1))
            if tr >= 3:
                out.add((u, v, 2))
        return out

    def _infra_cost(self, arcs: set, links: set):
        c = sum((self.spec.section(u, v).track_cost[tr] for u, v, tr in arcs), 0)
        return c + sum((self.spec.link_map[lk].cost for lk in links), 0)

    # timetable ---------------------------------------------------------------------
    def _timetable(self, chosen: dict[TrainKey, _Option], red_time: dict, red_mht: dict, relaxed: bool):
        """Earliest feasible times for the chosen routes, or None.

        ``relaxed`` lets every run take any time between its fastest and nominal value and
        applies the largest headway reduction: a necessary condition for any reduction vector.
        """
        spec, fam = self.spec, self.family
        index: dict[tuple[TrainKey, int, str], int] = {}
        keys = sorted(chosen)
        n = 1
        for key in keys:
            for idx in range(len(chosen[key].tracks)):
                index[(key, idx, "d")] = n
                index[(key, idx, "a")] = n + 1
                n += 2
        stn = _STN(n)
        Z = _STN.ANCHOR
        ok = True

        def ge(u, v, w):  # x[v] - x[u] >= w
            nonlocal ok
            ok = ok and stn.add(u, v, w)

        for key in keys:
            opt, train = chosen[key], fam.train(key)
            arcs = opt.arcs
            for idx, (i, j, _tr) in enumerate(arcs):
                d, a = index[(key, idx, "d")], index[(key, idx, "a")]
                sec = spec.section(i, j)
                t = sec.travel_time[train.train_type]
                lo = t - (self.time_cap[sec.key] if relaxed else red_time.get(sec.key, 0))
                hi = t if relaxed else lo
                ge(d, a, lo)
                ge(a, d, -hi)
                if idx > 0:
                    prev_a = index[(key, idx - 1, "a")]
                    ge(prev_a, d, 0)
                    ge(d, prev_a, -spec.node_map[i].max_stop_minutes)
            ge(Z, index[(key, 0, "d")], train.earliest_departure)
            ge(index[(key, len(arcs) - 1, "a")], Z, -train.latest_arrival)
            if not ok:
                return None

        for sc in fam.scenarios:
            for r in sc.relations:
                k1, k2 = TrainKey(sc.id, r.first), TrainKey(sc.id, r.second)
                if k1 not in chosen or k2 not in chosen:
                    continue
                first = self._event(chosen[k1], k1, r.node, "a" if r.kind is not RelationKind.DEPARTURE_FREQUENCY else "d", index)
                second = self._event(chosen[k2], k2, r.node, "a" if r.kind is RelationKind.ARRIVAL_FREQUENCY else "d", index)
                if first is None or second is None:
                    return None
                ge(first, second, r.min_minutes)
                ge(second, first, -r.max_minutes)
        if not ok:
            return None

        disjunctions = []
        usage: dict[tuple[str, str, int], list] = {}
        for key in keys:
            for idx, (i, j, tr) in enumerate(chosen[key].arcs):
                usage.setdefault((*section_key(i, j), tr), []).append((key, idx, i, j))
        for (u, v, tr), users in sorted(usage.items()):
            sec = spec.section(u, v)
            mht = self.mht_cap[sec.key] if relaxed else red_mht.get(sec.key, 0)
            for (k1, x1, i1, j1), (k2, x2, i2, j2) in itertools.combinations(users, 2):
                if k1.scenario != k2.scenario and not self.config.cross_scenario_headways:
                    continue
                d1, a1 = index[(k1, x1, "d")], index[(k1, x1, "a")]
                d2, a2 = index[(k2, x2, "d")], index[(k2, x2, "a")]
                if i1 == i2:
                    ty1, ty2 = fam.train(k1).train_type, fam.train(k2).train_type
                    h12 = sec.base_headway[(ty1, ty2)] - mht
                    h21 = sec.base_headway[(ty2, ty1)] - mht
                    disjunctions.append(((d1, d2, h12), (d2, d1, h21)))
                else:
                    c_j = spec.node_map[j1].crossing_time_minutes
                    c_i = spec.node_map[i1].crossing_time_minutes
                    disjunctions.append(((a1, d2, c_j), (a2, d1, c_i)))
        times = _solve_disjunctive(stn, disjunctions)
        if times is None:
            return None
        return {key: tuple((times[index[(key, idx, "d")]], times[index[(key, idx, "a")]])
                           for idx in range(len(chosen[key].tracks))) for key in keys}

    @staticmethod
    def _event(opt: _Option, key, node, kind, index):
        for idx, (i, j, _) in enumerate(opt.arcs):
            if kind == "a" and j == node:
                return index[(key, idx, "a")]
            if kind == "d" and i == node:
                return index[(key, idx, "d")]
        return None

    def _reduction_vectors(self, chosen: dict[TrainKey, _Option]):
        """All reduction vectors on the used sections, cheapest first."""
        used = sorted({section_key(i, j) for opt in chosen.values() for i, j, _ in opt.arcs})
        axes = []
        for s in used:
            sec = self.spec.section_map[s]
            axes.append([(s, "t", r, sec.time_reduction_cost * r) for r in range(self.time_cap[s] + 1)])
            axes.append([(s, "h", r, sec.headway_reduction_cost * r) for r in range(self.mht_cap[s] + 1)])
        vectors = []
        for combo in itertools.product(*axes):
            cost = sum((c for *_, c in combo), 0)
            rt = {s: r for s, kind, r, _ in combo if kind == "t" and r}
            rh = {s: r for s, kind, r, _ in combo if kind == "h" and r}
            vectors.append((cost, tuple(sorted(rt.items())), tuple(sorted(rh.items()))))
        vectors.sort()
        return vectors

    # driver ------------------------------------------------------------------------
    def _better(self, cost) -> bool:
        return self.best_cost is None or cost < self.best_cost

    def run(self):
        fam = self.family
        need = fam.required_scenarios()
        scen_ids = [s.id for s in fam.scenarios]
        subsets = []
        for size in range(need, len(scen_ids) + 1):
            for active in itertools.combinations(scen_ids, size):
                subsets.append(frozenset(active))
        for active in subsets:
            penalty = sum((s.penalty for s in fam.scenarios if s.id not in active), 0)
            penalty += sum(
                (t.penalty for s in fam.scenarios if s.id not in active for t in s.trains), 0
            )
            if not self._better(penalty):
                continue
            trains = [k for k in fam.train_keys() if k.scenario in active]
            # mandatory trains first: they prune hardest
            trains.sort(key=lambda k: (not fam.scenario_map[k.scenario].is_mandatory(k.train), k))
            self._dfs(active, trains, 0, {}, set(), set(), penalty)
        return self.best_cost, self.best_plan

    def _dfs(self, active, trains, pos, chosen, arcs, links, penalty) -> None:
        cost_so_far = self._infra_cost(arcs, links) + penalty
        if not self._better(cost_so_far):
            return
        if chosen and self._timetable(chosen, {}, {}, relaxed=True) is None:
            return
        if pos == len(trains):
            self._leaf(active, chosen, arcs, links, penalty)
            return
        key = trains[pos]
        sc = self.family.scenario_map[key.scenario]
        options = []
        for opt in self.options[key]:
            new_arcs = self._closure(arcs | set(opt.built))
            new_links = links | set(opt.links)
            options.append((self._infra_cost(new_arcs, new_links), opt.nodes, opt.tracks, opt, new_arcs, new_links))
        options.sort(key=lambda e: e[:3])
        for _, _, _, opt, new_arcs, new_links in options:
            chosen[key] = opt
            self._dfs(active, trains, pos + 1, chosen, new_arcs, new_links, penalty)
            del chosen[key]
        if not sc.is_mandatory(key.train):
            remaining_opt = sum(
                1 for k in trains[pos + 1:] if k.scenario == key.scenario and sc.train_map[k.train].optional
            )
            have = sum(1 for k in chosen if k.scenario == key.scenario and sc.train_map[k.train].optional)
            if have + remaining_opt >= sc.demanded_optional:
                self._dfs(active, trains, pos + 1, chosen, arcs, links, penalty + sc.train_map[key.train].penalty)

    def _leaf(self, active, chosen, arcs, links, penalty) -> None:
        base = self._infra_cost(arcs, links) + penalty
        for red_cost, rt, rh in self._reduction_vectors(chosen):
            total = base + red_cost
            if not self._better(total):
                return
            times = self._timetable(chosen, dict(rt), dict(rh), relaxed=False)
            if times is None:
                continue
            self.best_cost = total
            reductions = {}
            for s, r in rt:
                reductions[s] = (r, 0)
            for s, r in rh:
                reductions[s] = (reductions.get(s, (0, 0))[0], r)
            self.best_plan = PlanSolution(
                built_arcs=set(arcs),
                built_links=set(links),
                reductions=reductions,
                routes={k: Route(opt.nodes, opt.tracks, times[k]) for k, opt in chosen.items()},
                active_scenarios=set(active),
                active_trains=set(chosen),
            )
            return


def check_scale(family: TimetableFamily, spec: InfrastructureSpec, limits: OracleLimits | None = None) -> None:
    limits = limits or OracleLimits()
    if len(spec.nodes) > limits.max_nodes:
        raise OracleRefusal(f"{len(spec.nodes)} nodes exceed the oracle limit of {limits.max_nodes}")
    if len(family.scenarios) > limits.max_scenarios:
        raise OracleRefusal(f"{len(family.scenarios)} scenarios exceed the oracle limit of {limits.max_scenarios}")
    for sc in family.scenarios:
        if len(sc.trains) > limits.max_trains:
            raise OracleRefusal(f"scenario {sc.id} has {len(sc.trains)} trains; the oracle limit is {limits.max_trains}")
    if family.horizon() > limits.max_horizon:
        raise OracleRefusal(f"horizon {family.horizon()} exceeds the oracle limit of {limits.max_horizon}")


def brute_force_optimum(
    family: TimetableFamily,
    spec: InfrastructureSpec,
    config: BuildConfig | None = None,
    limits: OracleLimits | None = None,
) -> tuple[int | Fraction, PlanSolution] | None:
    """True optimum ``(cost, plan)``, or ``None`` when no plan exists."""
    config = config or BuildConfig()
    check_scale(family, spec, limits)
    if not 0 < family.coverage_share <= 1 or family.required_scenarios() > len(family.scenarios):
        return None
    search = _Search(family, spec, config)
    cost, plan = search.run()
    if cost is None:
        return None
    if isinstance(cost, Fraction) and cost.denominator == 1:
        cost = cost.numerator
    return cost, plan
