"""Deterministic and robust network-design models over a solver-neutral MILP representation."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from railnet.core import (
    BuildConfig,
    InfrastructureSpec,
    RelationKind,
    Scenario,
    TimetableFamily,
    TrainKey,
    headway_reduction_cap,
    section_key,
    time_reduction_cap,
)
from railnet.preprocess import HeadwaySets, HKey, RelevantSets, XKey

Number = int | Fraction

LE, GE, EQ = "<=", ">=", "="


class ModelBuildError(ValueError):
    pass


@dataclass(frozen=True)
class MilpVariable:
    id: int
    name: str
    binary: bool
    lo: int = 0
    hi: int = 1
    objective: Number = 0


@dataclass(frozen=True)
class LinearConstraint:
    terms: tuple[tuple[int, Number], ...]
    sense: str
    rhs: Number
    tag: str

    def activity(self, values: Sequence[Number]) -> Number:
        return sum((c * values[v] for v, c in self.terms), 0)

    def satisfied(self, values: Sequence[Number]) -> bool:
        lhs = self.activity(values)
        if self.sense == LE:
            return lhs <= self.rhs
        if self.sense == GE:
            return lhs >= self.rhs
        return lhs == self.rhs


@dataclass
class MilpModel:
    variables: list[MilpVariable] = field(default_factory=list)
    constraints: list[LinearConstraint] = field(default_factory=list)
    objective_constant: Number = 0
    big_m: int = 0
    sense: str = "minimize"
    # qualified train names ("scenario/train") are used when more than one scenario exists
    qualified_trains: bool = False

    def __post_init__(self) -> None:
        self._by_name = {v.name: v for v in self.variables}

    @property
    def provenance(self) -> Counter:
        return Counter(c.tag for c in self.constraints)

    def var(self, name: str) -> MilpVariable:
        return self._by_name[name]

    def has_var(self, name: str) -> bool:
        return name in self._by_name

    def add_variable(self, name: str, binary: bool, lo: int = 0, hi: int = 1, objective: Number = 0) -> int:
        if name in self._by_name:
            raise ModelBuildError(f"duplicate variable {name}")
        v = MilpVariable(len(self.variables), name, binary, lo, hi, objective)
        self.variables.append(v)
        self._by_name[name] = v
        return v.id

    def add_constraint(self, terms: Iterable[tuple[int, Number]], sense: str, rhs: Number, tag: str) -> None:
        row = _row(terms, sense, rhs, tag)
        if not row.terms:
            # rows over trains without paths collapse to constants
            if not row.satisfied(()):
                raise ModelBuildError(f"constant {tag} row is infeasible: 0 {sense} {rhs}")
            return
        self.constraints.append(row)

    def objective_value(self, values: Sequence[Number]) -> Number:
        return self.objective_constant + sum(
            (v.objective * values[v.id] for v in self.variables if v.objective), 0
        )

    def violated(self, values: Sequence[Number]) -> list[LinearConstraint]:
        """Constraints (and bounds, as pseudo-rows tagged ``bound``) broken by ``values``."""
        out = [c for c in self.constraints if not c.satisfied(values)]
        for v in self.variables:
            if not v.lo <= values[v.id] <= v.hi:
                out.append(LinearConstraint(((v.id, 1),), GE, v.lo, "bound"))
        return out

    def train_tag(self, key: TrainKey) -> str:
        return str(key) if self.qualified_trains else key.train


def linearize_product(
    target: Sequence[int], f1: Sequence[int] | int, f2: Sequence[int] | int, tag: str = "linearization"
) -> list[LinearConstraint]:
    """Three rows forcing sum(target) == f1 * f2 for binary terms."""
    f1 = [f1] if isinstance(f1, int) else list(f1)
    f2 = [f2] if isinstance(f2, int) else list(f2)
    tgt = [(v, 1) for v in target]
    return [
        _row(tgt + [(v, -1) for v in f1] + [(v, -1) for v in f2], GE, -1, tag),
        _row(tgt + [(v, -1) for v in f1], LE, 0, tag),
        _row(tgt + [(v, -1) for v in f2], LE, 0, tag),
    ]


def _row(terms, sense, rhs, tag) -> LinearConstraint:
    merged: dict[int, Number] = {}
    for v, c in terms:
        merged[v] = merged.get(v, 0) + c
    return LinearConstraint(tuple((v, c) for v, c in merged.items() if c != 0), sense, rhs, tag)


def compute_big_m(family: TimetableFamily, spec: InfrastructureSpec, config: BuildConfig | None = None) -> int:
    """Latest arrival plus the largest headway or crossing time, plus one."""
    horizon = family.horizon()
    if config is not None and config.planning_horizon_end_minutes:
        horizon = max(horizon, config.planning_horizon_end_minutes)
    return horizon + max(spec.max_headway(), spec.max_crossing_time()) + 1


def _fmt_arc(i, j, tr) -> str:
    return f"{i},{j},{tr}"


class _Builder:
    def __init__(self, family, rel, hw, spec, config, robust):
        self.family: TimetableFamily = family
        self.rel: RelevantSets = rel
        self.hw: HeadwaySets = hw
        self.spec: InfrastructureSpec = spec
        self.config: BuildConfig = config
        self.robust = robust
        self.model = MilpModel(qualified_trains=len(family.scenarios) > 1)
        self.M = compute_big_m(family, spec, config)
        self.model.big_m = self.M
        self.horizon = max(family.horizon(), config.planning_horizon_end_minutes or 0)
        self.n_trains = sum(1 for _ in family.train_keys())

    # -- helpers -----------------------------------------------------------
    def t(self, key: TrainKey) -> str:
        return self.model.train_tag(key)

    def var(self, name: str) -> int:
        return self.model.var(name).id

    def add(self, terms, sense, rhs, tag) -> None:
        self.model.add_constraint(terms, sense, rhs, tag)

    def x(self, key: TrainKey, i, j, tr) -> int:
        return self.var(f"x({self.t(key)},{_fmt_arc(i, j, tr)})")

    def d(self, key: TrainKey, i, j, tr) -> int:
        return self.var(f"d({self.t(key)},{_fmt_arc(i, j, tr)})")

    def a(self, key: TrainKey, i, j, tr) -> int:
        return self.var(f"a({self.t(key)},{_fmt_arc(i, j, tr)})")

    # -- model ---------------------------------------------------------------
    def build(self) -> MilpModel:
        self._design_variables()
        self._train_variables()
        if self.robust:
            self._activation_variables()
        self._headway_variables()
        self._routing_constraints()
        self._timing_constraints()
        self._relation_constraints()
        self._headway_constraints()
        if self.robust:
            self._robust_constraints()
        return self.model

    def _design_variables(self) -> None:
        m, spec, cfg = self.model, self.spec, self.config
        for u, v, tr in self.rel.arcs:
            cost = spec.section(u, v).track_cost[tr]
            m.add_variable(f"y({_fmt_arc(u, v, tr)})", True, objective=cost)
        for i, a, b in self.rel.links:
            m.add_variable(f"l({i},{a},{b})", True, objective=spec.link_map[(i, a, b)].cost)
        self.time_cap: dict[tuple[str, str], int] = {}
        self.mht_cap: dict[tuple[str, str], int] = {}
        for u, v in self.rel.sections:
            sec = spec.section(u, v)
            self.time_cap[(u, v)] = tc = time_reduction_cap(sec, cfg)
            self.mht_cap[(u, v)] = hc = headway_reduction_cap(sec, cfg)
            if tc > 0:
                m.add_variable(f"r_time({u},{v})", False, 0, tc, sec.time_reduction_cost)
            if hc > 0:
                m.add_variable(f"r_mht({u},{v})", False, 0, hc, sec.headway_reduction_cost)

    def r_time(self, i, j) -> list[tuple[int, int]]:
        u, v = section_key(i, j)
        return [(self.var(f"r_time({u},{v})"), 1)] if self.time_cap.get((u, v)) else []

    def r_mht(self, i, j) -> list[tuple[int, int]]:
        u, v = section_key(i, j)
        return [(self.var(f"r_mht({u},{v})"), 1)] if self.mht_cap.get((u, v)) else []

    def _train_variables(self) -> None:
        m = self.model
        for key in self.family.train_keys():
            for idx, _ in enumerate(self.rel.paths.get(key, ())):
                m.add_variable(f"p({self.t(key)},{idx})", True)
        for xk in self.rel.x:
            m.add_variable(f"x({self.t(xk.train)},{_fmt_arc(xk.i, xk.j, xk.track)})", True)
        for xk in self.rel.x:
            arc = _fmt_arc(xk.i, xk.j, xk.track)
            m.add_variable(f"d({self.t(xk.train)},{arc})", False, 0, self.horizon)
            m.add_variable(f"a({self.t(xk.train)},{arc})", False, 0, self.horizon)

    def _activation_variables(self) -> None:
        m = self.model
        for sc in self.family.scenarios:
            m.add_variable(f"o_szo({sc.id})", True, objective=-sc.penalty)
            m.objective_constant += sc.penalty
        for key in self.family.train_keys():
            pen = self.family.train(key).penalty
            m.add_variable(f"o_train({self.t(key)})", True, objective=-pen)
            m.objective_constant += pen

    def _headway_variables(self) -> None:
        for h in self.hw.H_f:
            self.model.add_variable(self._z("z_hf", h), True)
        for h in self.hw.H_c:
            self.model.add_variable(self._z("z_hc", h), True)

    def _z(self, kind: str, h: HKey) -> str:
        return f"{kind}({h.i},{h.j},{h.track},{self.t(h.k1)},{self.t(h.k2)})"

    def _routing_constraints(self) -> None:
        rel = self.rel
        path_vars = {
            key: [self.var(f"p({self.t(key)},{idx})") for idx in range(len(ps))]
            for key, ps in rel.paths.items()
        }
        self.path_vars = path_vars
        if not self.robust:
            for key in self.family.train_keys():
                self.add([(p, 1) for p in path_vars[key]], EQ, 1, "eq2")
        for lk in rel.links:
            terms = [
                (path_vars[key][idx], 1)
                for key, ps in rel.paths.items()
                for idx, p in enumerate(ps)
                if lk in p.link_indicators
            ]
            # the number of trains with a path through the link bounds the sum
            users = len({key for key, ps in rel.paths.items() if any(lk in p.link_indicators for p in ps)})
            terms.append((self.var(f"l({lk[0]},{lk[1]},{lk[2]})"), -users))
            self.add(terms, LE, 0, "eq3")

        x_by_train_sec: dict[tuple[TrainKey, str, str], list[int]] = defaultdict(list)
        for xk in rel.x:
            x_by_train_sec[(xk.train, xk.i, xk.j)].append(self.x(xk.train, xk.i, xk.j, xk.track))
        for key, ps in rel.paths.items():
            secs = sorted({s for p in ps for s in p.sections})
            for i, j in secs:
                terms = [(path_vars[key][idx], 1) for idx, p in enumerate(ps) if (i, j) in p.section_indicators]
                terms += [(xv, -1) for xv in x_by_train_sec[(key, i, j)]]
                self.add(terms, EQ, 0, "eq4")

        x_by_arc: dict[tuple[str, str, int], list[int]] = defaultdict(list)
        for xk in rel.x:
            u, v = section_key(xk.i, xk.j)
            x_by_arc[(u, v, xk.track)].append(self.x(xk.train, xk.i, xk.j, xk.track))
        for u, v, tr in rel.arcs:
            y = self.var(f"y({_fmt_arc(u, v, tr)})")
            users = x_by_arc[(u, v, tr)]
            self.add([(xv, 1) for xv in users] + [(y, -max(1, len(users)))], LE, 0, "eq5")
        for u, v, tr in rel.arcs:
            if tr == 2:
                self.add([(self.var(f"y({u},{v},2)"), 1), (self.var(f"y({u},{v},1)"), -1)], LE, 0, "eq6")
            elif tr > 2:
                self.add([(self.var(f"y({u},{v},{tr})"), 1), (self.var(f"y({u},{v},2)"), -1)], LE, 0, "eq7")

    def _timing_constraints(self) -> None:
        M, H = self.M, self.horizon
        for xk in self.rel.x:
            k, i, j, tr = xk
            t = self.spec.section(i, j).travel_time[self.family.train(k).train_type]
            x, d, a = self.x(k, i, j, tr), self.d(k, i, j, tr), self.a(k, i, j, tr)
            r = self.r_time(i, j)
            # a = d + t - r whenever x = 1
            self.add([(a, 1), (d, -1), *r, (x, -M)], GE, t - M, "eq8")
            self.add([(a, 1), (d, -1), *r, (x, M)], LE, t + M, "eq8")
        for xk in self.rel.x:
            k, i, j, tr = xk
            x, d, a = self.x(k, i, j, tr), self.d(k, i, j, tr), self.a(k, i, j, tr)
            t = self.spec.section(i, j).travel_time[self.family.train(k).train_type]
            w = self.rel.windows[xk]
            # zero when unused, otherwise inside the departure window
            lb, ub = max(0, w.lb), min(H, w.ub)
            self.add([(d, 1), (x, -ub)], LE, 0, "eq9")
            self.add([(a, 1), (x, -min(H, ub + t))], LE, 0, "eq9")
            if lb > 0:
                self.add([(d, 1), (x, -lb)], GE, 0, "eq9")
                self.add([(a, 1), (x, -(lb + t - self.time_cap[section_key(i, j)]))], GE, 0, "eq9")

        self.out_of: dict[tuple[TrainKey, str], list[int]] = defaultdict(list)
        self.into: dict[tuple[TrainKey, str], list[int]] = defaultdict(list)
        for k, i, j, tr in self.rel.x:
            self.out_of[(k, i)].append(self.d(k, i, j, tr))
            self.into[(k, j)].append(self.a(k, i, j, tr))
        for key in self.family.train_keys():
            train = self.family.train(key)
            deps = [(v, 1) for v in self.out_of[(key, train.origin)]]
            if self.robust:
                o = self.var(f"o_train({self.t(key)})")
                self.add(deps + [(o, -train.earliest_departure)], GE, 0, "eq10")
            else:
                self.add(deps, GE, train.earliest_departure, "eq10")
            self.add([(v, 1) for v in self.into[(key, train.destination)]], LE, train.latest_arrival, "eq11")
            interior = sorted({n for p in self.rel.paths.get(key, ()) for n in p.nodes[1:-1]})
            for n in interior:
                arr = [(v, 1) for v in self.into[(key, n)]]
                dep = [(v, 1) for v in self.out_of[(key, n)]]
                self.add(arr + [(v, -1) for v, _ in dep], LE, 0, "eq12")
                stop = self.spec.node_map[n].max_stop_minutes
                self.add(dep + [(v, -1) for v, _ in arr], LE, stop, "eq13")

    def _relation_constraints(self) -> None:
        tags = {
            RelationKind.ARRIVAL_FREQUENCY: ("eq16", "eq17", "eq34", "eq35"),
            RelationKind.DEPARTURE_FREQUENCY: ("eq18", "eq19", "eq36", "eq37"),
            RelationKind.TRANSFER: ("eq20", "eq21", "eq38", "eq39"),
        }
        for sc in self.family.scenarios:
            for r in sc.relations:
                k1, k2 = TrainKey(sc.id, r.first), TrainKey(sc.id, r.second)
                if r.kind is RelationKind.ARRIVAL_FREQUENCY:
                    plus, minus = self.into[(k2, r.node)], self.into[(k1, r.node)]
                elif r.kind is RelationKind.DEPARTURE_FREQUENCY:
                    plus, minus = self.out_of[(k2, r.node)], self.out_of[(k1, r.node)]
                else:
                    plus, minus = self.out_of[(k2, r.node)], self.into[(k1, r.node)]
                terms = [(v, 1) for v in plus] + [(v, -1) for v in minus]
                lo_tag, hi_tag, rlo_tag, rhi_tag = tags[r.kind]
                if self.robust:
                    o = self.var(f"o_szo({sc.id})")
                    self.add(terms + [(o, -r.min_minutes)], GE, 0, rlo_tag)
                    self.add(terms + [(o, -r.max_minutes)], LE, 0, rhi_tag)
                else:
                    self.add(terms, GE, r.min_minutes, lo_tag)
                    self.add(terms, LE, r.max_minutes, hi_tag)

    def _headway_constraints(self) -> None:
        M, hw = self.M, self.hw
        for h in hw.O_f:
            z = self.var(self._z("z_hf", h))
            self.add([(z, 1), (self.x(h.k1, h.i, h.j, h.track), -1), (self.x(h.k2, h.i, h.j, h.track), -1)], GE, -1, "eq22")
        for h in hw.P_f:
            zs = [self.var(self._z("z_hf", h)), self.var(self._z("z_hf", h._replace(k1=h.k2, k2=h.k1)))]
            for row in linearize_product(zs, self.x(h.k1, h.i, h.j, h.track), self.x(h.k2, h.i, h.j, h.track), "eq23"):
                self.add(row.terms, row.sense, row.rhs, row.tag)
        for h in hw.H_f:
            t1 = self.family.train(h.k1).train_type
            t2 = self.family.train(h.k2).train_type
            headway = self.spec.section(h.i, h.j).base_headway[(t1, t2)]
            z = self.var(self._z("z_hf", h))
            terms = [(self.d(h.k2, h.i, h.j, h.track), 1), (self.d(h.k1, h.i, h.j, h.track), -1), *self.r_mht(h.i, h.j), (z, -M)]
            self.add(terms, GE, headway - M, "eq24")
        for h in hw.C_c:
            self.add([(self.x(h.k1, h.i, h.j, h.track), 1), (self.x(h.k2, h.j, h.i, h.track), 1)], LE, 1, "eq25")
        for h in hw.O_c:
            z = self.var(self._z("z_hc", h))
            self.add([(z, 1), (self.x(h.k1, h.i, h.j, h.track), -1), (self.x(h.k2, h.j, h.i, h.track), -1)], GE, -1, "eq26")
        for h in hw.P_c:
            back = HKey(h.j, h.i, h.track, h.k2, h.k1)
            zs = [self.var(self._z("z_hc", h)), self.var(self._z("z_hc", back))]
            for row in linearize_product(zs, self.x(h.k1, h.i, h.j, h.track), self.x(h.k2, h.j, h.i, h.track), "eq27"):
                self.add(row.terms, row.sense, row.rhs, row.tag)
        for h in hw.H_c:
            cross = self.spec.node_map[h.j].crossing_time_minutes
            z = self.var(self._z("z_hc", h))
            terms = [(self.d(h.k2, h.j, h.i, h.track), 1), (self.a(h.k1, h.i, h.j, h.track), -1), (z, -M)]
            self.add(terms, GE, cross - M, "eq28")

    def _robust_constraints(self) -> None:
        fam = self.family
        need = fam.required_scenarios()
        if not 0 < fam.coverage_share <= 1 or need > len(fam.scenarios):
            raise ModelBuildError(f"coverage share {fam.coverage_share} cannot be met by {len(fam.scenarios)} scenarios")
        szo = {sc.id: self.var(f"o_szo({sc.id})") for sc in fam.scenarios}
        self.add([(v, 1) for v in szo.values()], GE, need, "eq30")
        for sc in fam.scenarios:
            for t in sc.trains:
                key = TrainKey(sc.id, t.id)
                o = self.var(f"o_train({self.t(key)})")
                for row in linearize_product(self.path_vars.get(key, []), o, szo[sc.id], "eq31"):
                    self.add(row.terms, row.sense, row.rhs, row.tag)
                if sc.is_mandatory(t.id):
                    self.add([(o, 1), (szo[sc.id], -1)], EQ, 0, "eq32")
                else:
                    self.add([(o, 1), (szo[sc.id], -1)], LE, 0, "eq33")
            free = [TrainKey(sc.id, t.id) for t in sc.trains if t.optional]
            if free:
                terms = [(self.var(f"o_train({self.t(k)})"), 1) for k in free]
                self.add(terms + [(szo[sc.id], -sc.demanded_optional)], GE, 0, "eq33")


def _as_family(scenario_or_family: Scenario | TimetableFamily) -> TimetableFamily:
    if isinstance(scenario_or_family, Scenario):
        return TimetableFamily((scenario_or_family,))
    return scenario_or_family


def build_deterministic(
    scenario: Scenario | TimetableFamily,
    rel: RelevantSets,
    hw: HeadwaySets,
    spec: InfrastructureSpec,
    config: BuildConfig,
) -> MilpModel:
    family = _as_family(scenario)
    if len(family.scenarios) != 1:
        raise ModelBuildError("the deterministic model takes exactly one scenario")
    if family.scenarios[0].has_free_optional:
        raise ModelBuildError("optional trains need the robust model")
    if rel.pathless:
        raise ModelBuildError("train(s) without paths: " + ", ".join(map(str, rel.pathless)))
    return _Builder(family, rel, hw, spec, config, robust=False).build()


def build_robust(
    family: TimetableFamily,
    rel: RelevantSets,
    hw: HeadwaySets,
    spec: InfrastructureSpec,
    config: BuildConfig,
) -> MilpModel:
    if not family.scenarios:
        raise ModelBuildError("empty timetable family")
    return _Builder(family, rel, hw, spec, config, robust=True).build()


def infrastructure_cost_terms(model: MilpModel) -> list[MilpVariable]:
    """Variables carrying building or reduction cost."""
    return [v for v in model.variables if v.name.startswith(("y(", "l(", "r_time(", "r_mht("))]
