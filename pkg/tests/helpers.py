"""Small instance builders and the generated suites shared by the tests."""

from __future__ import annotations

from railnet.core import (
    BuildConfig,
    InfrastructureSpec,
    Node,
    NodeLink,
    Scenario,
    Section,
    TimetableFamily,
    Train,
)
from railnet.generate import GeneratorParams
from railnet.milp import build_deterministic, build_robust
from railnet.preprocess import build_headway_sets, build_relevant_sets
from railnet.solve import solve_branch_and_bound
from railnet.validate import check_plan, extract_plan

SUITE_SEEDS = range(1, 51)
ROBUST_SEEDS = range(1, 21)


def suite_params(seed: int) -> GeneratorParams:
    """Oracle-scale deterministic instances: 4-6 nodes, 4-6 trains, horizon 60-100."""
    g = 2 + seed % 3
    f = 2 + (seed // 3) % 2
    nodes = 4 + seed % 3
    return GeneratorParams(
        nodes=nodes,
        sections=nodes + seed % 2,
        trains_per_type={"G": g, "F": min(f, 6 - g)},
        horizon=60 + 20 * (seed % 3),
        # every fifth instance allows a third track, so A and B can differ
        max_tracks=3 if seed % 5 == 0 else 2,
    )


def robust_params(seed: int) -> GeneratorParams:
    return GeneratorParams(
        nodes=4 + seed % 2,
        trains_per_type={"G": 2, "F": 1 + seed % 2},
        horizon=60 + 20 * (seed % 2),
        scenarios=2 + seed % 2,
        optional_share=0.34 if seed % 3 else 0.0,
        coverage_share=[0.5, 0.34, 1.0][seed % 3],
    )


SWEEP_SEED = 1
SWEEP_PARAMS = GeneratorParams(nodes=5, trains_per_type={"G": 2, "F": 1}, horizon=80, scenarios=10)


def section(u, v, times, tracks=2, cost=100, second=100, headway=4, length=10, **kw) -> Section:
    types = list(times)
    return Section(
        endpoints=(u, v),
        length_km=length,
        max_tracks=tracks,
        travel_time=dict(times),
        base_headway={(a, b): headway for a in types for b in types},
        track_cost={1: cost, 2: second, 3: second, 4: second},
        **kw,
    )


def chain_spec(times=(10, 10), cost=100, link_cost=10, **kw) -> InfrastructureSpec:
    """Chain A-B-C-... with one section per entry of ``times`` (train type G)."""
    names = [chr(ord("A") + n) for n in range(len(times) + 1)]
    nodes = tuple(Node(n, max_stop_minutes=5, crossing_time_minutes=1) for n in names)
    secs = tuple(section(a, b, {"G": t}, cost=cost, **kw) for (a, b), t in zip(zip(names, names[1:]), times))
    links = tuple(NodeLink(b, a, c, link_cost) for a, b, c in zip(names, names[1:], names[2:]))
    return InfrastructureSpec(nodes, secs, links)


def family(*trains, relations=(), coverage=1) -> TimetableFamily:
    return TimetableFamily((Scenario("s1", tuple(trains), tuple(relations)),), coverage)


def train(tid, o, e, dep, arr, ttype="G", **kw) -> Train:
    return Train(tid, ttype, o, e, dep, arr, **kw)


def solve_family(spec, fam, config: BuildConfig | None = None, robust: bool | None = None):
    """(model, solution, plan or None, report or None, sets) through the library calls."""
    config = config or BuildConfig()
    rel = build_relevant_sets(fam, spec, config)
    hw = build_headway_sets(fam, rel, spec, config)
    if robust is None:
        robust = not fam.is_deterministic
    model = (build_robust if robust else build_deterministic)(fam, rel, hw, spec, config)
    sol = solve_branch_and_bound(model)
    plan = extract_plan(sol, model, fam) if sol.values is not None else None
    report = check_plan(plan, fam, spec, config) if plan is not None else None
    return model, sol, plan, report, (rel, hw)


def encode_plan(plan, model, fam, rel, hw, spec):
    """Model vector for a plan found outside the model (e.g. by the oracle).

    Raises KeyError when the plan needs a variable the model lacks.
    """
    vec = [0] * len(model.variables)
    tag = model.train_tag

    def put(name, value):
        vec[model.var(name).id] = value

    for u, v, tr in plan.built_arcs:
        put(f"y({u},{v},{tr})", 1)
    for at, a, b in plan.built_links:
        put(f"l({at},{a},{b})", 1)
    for (u, v), (rt, rh) in plan.reductions.items():
        if rt:
            put(f"r_time({u},{v})", rt)
        if rh:
            put(f"r_mht({u},{v})", rh)
    if model.has_var(f"o_szo({fam.scenarios[0].id})"):
        for sc in fam.scenarios:
            put(f"o_szo({sc.id})", int(sc.id in plan.active_scenarios))
        for key in fam.train_keys():
            put(f"o_train({tag(key)})", int(key in plan.active_trains))
    used = {}
    for key, route in plan.routes.items():
        idx = [p.nodes for p in rel.paths[key]].index(route.nodes)
        put(f"p({tag(key)},{idx})", 1)
        for (i, j, tr), (d, a) in zip(route.arcs, route.times):
            put(f"x({tag(key)},{i},{j},{tr})", 1)
            put(f"d({tag(key)},{i},{j},{tr})", d)
            put(f"a({tag(key)},{i},{j},{tr})", a)
            used[(key, i, j, tr)] = (d, a)
    for h in hw.H_f:
        e1, e2 = used.get((h.k1, h.i, h.j, h.track)), used.get((h.k2, h.i, h.j, h.track))
        if e1 and e2 and e1[0] < e2[0]:
            put(f"z_hf({h.i},{h.j},{h.track},{tag(h.k1)},{tag(h.k2)})", 1)
    for h in hw.H_c:
        e1, e2 = used.get((h.k1, h.i, h.j, h.track)), used.get((h.k2, h.j, h.i, h.track))
        if e1 and e2 and e2[0] - e1[1] >= spec.node_map[h.j].crossing_time_minutes:
            put(f"z_hc({h.i},{h.j},{h.track},{tag(h.k1)},{tag(h.k2)})", 1)
    return vec
