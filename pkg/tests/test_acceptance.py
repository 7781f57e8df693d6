"""Acceptance criteria on the generated suites; each test prints one PASS/FAIL line."""

from __future__ import annotations

import copy
import dataclasses
import random
import time
from fractions import Fraction

import pytest

from railnet.core import BuildConfig, Scenario, TimetableFamily, section_key, validate_instance
from railnet.generate import GeneratorParams, generate_family
from railnet.milp import build_deterministic, build_robust
from railnet.pipeline import sweep_coverage
from railnet.preprocess import XKey, build_headway_sets, build_relevant_sets
from railnet.solve import SolveStatus, emit_model_text, import_model_text, solve_branch_and_bound
from railnet.validate import brute_force_optimum, check_plan, extract_plan

from helpers import ROBUST_SEEDS, SUITE_SEEDS, SWEEP_PARAMS, SWEEP_SEED, robust_params, suite_params

PRESETS = ("A", "B", "C")


@pytest.fixture
def verdict(capsys):
    def emit(number: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
        assert ok, detail

    return emit


@dataclasses.dataclass
class Case:
    seed: int
    preset: str
    spec: object
    family: object
    config: BuildConfig
    rel: object
    hw: object
    model: object
    solution: object
    plan: object
    solve_seconds: float


def _solve(seed, spec, fam, cfg, preset, robust=False):
    start = time.perf_counter()
    rel = build_relevant_sets(fam, spec, cfg)
    hw = build_headway_sets(fam, rel, spec, cfg)
    model = (build_robust if robust else build_deterministic)(fam, rel, hw, spec, cfg)
    sol = solve_branch_and_bound(model)
    plan = extract_plan(sol, model, fam) if sol.status.has_solution else None
    return Case(seed, preset, spec, fam, cfg, rel, hw, model, sol, plan, time.perf_counter() - start)


@pytest.fixture(scope="module")
def suite():
    """Every suite seed solved under A, B and C, with oracle optima and timings."""
    cases, oracle, oracle_plans = {}, {}, {}
    solver_seconds = oracle_seconds = 0.0
    for seed in SUITE_SEEDS:
        spec, fam, _ = generate_family(seed, suite_params(seed))
        for preset in PRESETS:
            cfg = BuildConfig.preset(preset)
            case = _solve(seed, spec, fam, cfg, preset)
            solver_seconds += case.solve_seconds
            cases[(seed, preset)] = case
            start = time.perf_counter()
            found = brute_force_optimum(fam, spec, cfg)
            oracle_seconds += time.perf_counter() - start
            oracle[(seed, preset)] = None if found is None else found[0]
            oracle_plans[(seed, preset)] = None if found is None else found[1]
    return cases, oracle, oracle_plans, solver_seconds, oracle_seconds


@pytest.fixture(scope="module")
def robust_suite():
    cases = {}
    for seed in ROBUST_SEEDS:
        spec, fam, cfg = generate_family(seed, robust_params(seed))
        cases[seed] = _solve(seed, spec, fam, cfg, "B", robust=True)
    return cases


def _shape(spec, fam):
    trains = max(len(sc.trains) for sc in fam.scenarios)
    horizon = max(t.latest_arrival for sc in fam.scenarios for t in sc.trains)
    return len(spec.nodes), trains, horizon


def test_criterion_1_oracle_equivalence(suite, verdict):
    cases, oracle, _, solver_s, oracle_s = suite
    shapes = [_shape(c.spec, c.family) for c in cases.values()]
    in_scope = all(n <= 6 and k <= 6 and h <= 120 for n, k, h in shapes)
    mismatches = [
        key for key, c in cases.items()
        if (c.solution.objective if c.solution.status is SolveStatus.OPTIMAL else None) != oracle[key]
    ]
    infeasible = sum(1 for v in oracle.values() if v is None)
    total = solver_s + oracle_s
    ok = in_scope and not mismatches and len(SUITE_SEEDS) >= 50 and total < 600
    verdict(
        1, "oracle equivalence",
        ok,
        f"{len(cases)} solves over {len(SUITE_SEEDS)} seeds, {len(mismatches)} mismatches {mismatches[:5]}, "
        f"{infeasible} infeasible on both sides, solver {solver_s:.1f}s + oracle {oracle_s:.1f}s",
    )


def _mutations(plan, family, rng):
    """(rule family, mutated plan) pairs for one accepted plan."""
    out = []
    keys = sorted(plan.routes)
    for key in keys:
        route = plan.routes[key]
        n = rng.randrange(len(route.times))
        for delta in (-1, 1):
            times = list(route.times)
            d, a = times[n]
            times[n] = (d + delta, a)
            m = copy.deepcopy(plan)
            m.routes[key] = dataclasses.replace(route, times=tuple(times))
            out.append(("travel-time", m))
    for key in keys:
        arcs = plan.routes[key].arcs
        i, j, tr = arcs[rng.randrange(len(arcs))]
        m = copy.deepcopy(plan)
        m.built_arcs.discard((*section_key(i, j), tr))
        out.append(("path", m))
    for key in keys:
        if not family.train(key).optional:
            m = copy.deepcopy(plan)
            del m.routes[key]
            m.active_trains.discard(key)
            out.append(("path", m))
    for link in sorted(plan.built_links):
        m = copy.deepcopy(plan)
        m.built_links.discard(link)
        out.append(("link", m))
    return out


def test_criterion_2_validator(suite, robust_suite, verdict):
    cases = [c for c in suite[0].values() if c.plan is not None] + [c for c in robust_suite.values() if c.plan is not None]
    rejected = [(c.seed, c.preset) for c in cases if not check_plan(c.plan, c.family, c.spec, c.config).ok]
    rng = random.Random(2024)
    tried, missed, by_rule = 0, [], {}
    for c in cases:
        for rule, mutant in _mutations(c.plan, c.family, rng):
            tried += 1
            by_rule[rule] = by_rule.get(rule, 0) + 1
            if rule not in check_plan(mutant, c.family, c.spec, c.config).rules():
                missed.append((c.seed, c.preset, rule))
    ok = not rejected and tried >= 200 and not missed
    verdict(
        2, "validator soundness and completeness",
        ok,
        f"{len(cases) - len(rejected)}/{len(cases)} solver plans accepted; "
        f"{tried - len(missed)}/{tried} mutations flagged in their family {dict(sorted(by_rule.items()))} {missed[:5]}",
    )


def test_criterion_3_configuration_chain(suite, verdict):
    cases = suite[0]
    broken, strict_ab, strict_bc, compared = [], 0, 0, 0
    for seed in SUITE_SEEDS:
        sols = [cases[(seed, p)].solution for p in PRESETS]
        if not all(s.status is SolveStatus.OPTIMAL for s in sols):
            # a relaxation must stay feasible when a tighter configuration is
            tight_ok = [s.status is SolveStatus.OPTIMAL for s in sols]
            if tight_ok != sorted(tight_ok, reverse=True):
                broken.append(seed)
            continue
        a, b, c = (s.objective for s in sols)
        compared += 1
        strict_ab += a < b
        strict_bc += b < c
        if not a <= b <= c:
            broken.append(seed)
    verdict(
        3, "configuration relaxation chain A <= B <= C",
        not broken,
        f"{compared} instances compared, {strict_ab} with A < B, {strict_bc} with B < C, broken {broken}",
    )


def test_criterion_4_coverage_sweep(verdict):
    spec, fam, cfg = generate_family(SWEEP_SEED, SWEEP_PARAMS)
    rows = sweep_coverage(spec, fam, cfg, range(10, 101, 10))
    costs = [r.cost for r in rows]
    optimal = all(r.status == SolveStatus.OPTIMAL.value for r in rows)
    monotone = all(a <= b for a, b in zip(costs, costs[1:])) if optimal else False
    covered = all(r.achieved_percent is not None and r.achieved_percent >= r.requested_percent for r in rows)
    over = [f"{r.requested_percent}->{r.achieved_percent}" for r in rows if r.achieved_percent and r.achieved_percent > r.requested_percent]
    verdict(
        4, "robust coverage monotonicity and over-fulfilment",
        len(fam.scenarios) == 10 and optimal and monotone and covered,
        f"costs {[float(c) if c is not None else None for c in costs]}; over-fulfilled rows {over}",
    )


def test_criterion_5_robust_degeneracy(suite, verdict):
    cases = suite[0]
    diffs, checked = [], 0
    for (seed, preset), c in cases.items():
        assert len(c.family.scenarios) == 1 and c.family.coverage_share == 1
        assert not any(t.optional for t in c.family.scenarios[0].trains)
        rob = solve_branch_and_bound(build_robust(c.family, c.rel, c.hw, c.spec, c.config))
        checked += 1
        if (rob.status, rob.objective) != (c.solution.status, c.solution.objective):
            diffs.append((seed, preset))
    verdict(5, "robust degeneracy", not diffs, f"{checked} robust builds, mismatches {diffs}")


def _optional_cases():
    """One-scenario instances with at most four trains, one of them optional."""
    for seed in range(1, 21):
        params = GeneratorParams(nodes=4 + seed % 2, trains_per_type={"G": 2, "F": 1 + seed % 2}, horizon=60 + 20 * (seed % 2))
        spec, fam, cfg = generate_family(seed, params)
        (sc,) = fam.scenarios
        for pick in sorted({0, len(sc.trains) - 1}):
            yield seed, pick, spec, sc, cfg


def test_criterion_6_optional_penalty(verdict):
    # integer infrastructure costs: a penalty of 1/2 is below any single cost and any cost difference
    penalty = Fraction(1, 2)
    wrong, active, inactive, skipped = [], 0, 0, 0
    for seed, pick, spec, sc, cfg in _optional_cases():
        opt = sc.trains[pick]
        rest = sc.trains[:pick] + sc.trains[pick + 1:]
        # relations may only tie mandatory trains, so those on the picked train go
        rels = _relations(sc, opt)
        without = brute_force_optimum(TimetableFamily((Scenario("s1", rest, rels),)), spec, cfg)
        forced = brute_force_optimum(TimetableFamily((Scenario("s1", sc.trains, rels),)), spec, cfg)
        if without is None:
            skipped += 1
            continue
        fam = TimetableFamily((Scenario("s1", rest + (dataclasses.replace(opt, optional=True, penalty=penalty),), rels),))
        assert not validate_instance(spec, fam, cfg)
        case = _solve(seed, spec, fam, cfg, "B", robust=True)
        oracle_cost, _ = brute_force_optimum(fam, spec, cfg)
        is_active = any(k.train == opt.id for k in case.plan.active_trains)
        free = forced is not None and forced[0] == without[0]
        active += is_active
        inactive += not is_active
        if is_active != free or case.solution.objective != oracle_cost:
            wrong.append((seed, opt.id))
    verdict(
        6, "optional-train penalty",
        not wrong and active and inactive,
        f"{active} optional trains activated at zero extra cost, {inactive} left out; "
        f"{skipped} cases without a feasible core; wrong {wrong}",
    )


def _relations(sc, dropped):
    return tuple(r for r in sc.relations if dropped.id not in (r.first, r.second))


def _times(plan):
    out = {}
    for key, route in plan.routes.items():
        for (i, j, tr), (d, a) in zip(route.arcs, route.times):
            out[(key, i, j, tr)] = (d, a)
    return out


def _preprocessing_breaches(case, plan):
    """Implicit pairs out of their promised order and conflict pairs sharing a track."""
    used = _times(plan)
    bad = []
    for h in case.hw.implicit:
        first = used.get((h.k1, h.i, h.j, h.track))
        if first is None:
            continue
        same = used.get((h.k2, h.i, h.j, h.track))
        if same is not None:
            sec = case.spec.section(*section_key(h.i, h.j))
            tt = (case.family.train(h.k1).train_type, case.family.train(h.k2).train_type)
            if same[0] - first[0] < sec.base_headway[tt]:
                bad.append(("implicit", h))
        other = used.get((h.k2, h.j, h.i, h.track))
        if other is not None and other[0] - first[1] < case.spec.node_map[h.j].crossing_time_minutes:
            bad.append(("implicit", h))
    for h in case.hw.C_c:
        if (h.k1, h.i, h.j, h.track) in used and (h.k2, h.j, h.i, h.track) in used:
            bad.append(("conflict", h))
    return bad


def _perturbed(case, rng, tries=20):
    """Accepted plans reached by shifting one train's whole schedule."""
    plan = case.plan
    for _ in range(tries):
        if not plan.routes:
            return
        key = rng.choice(sorted(plan.routes))
        delta = rng.choice((-3, -2, -1, 1, 2, 3))
        m = copy.deepcopy(plan)
        route = m.routes[key]
        m.routes[key] = dataclasses.replace(route, times=tuple((d + delta, a + delta) for d, a in route.times))
        if check_plan(m, case.family, case.spec, case.config).ok:
            yield m


def test_criterion_7_preprocessing_soundness(suite, verdict):
    cases, _, oracle_plans, *_ = suite
    outside, breaches = [], []
    rng = random.Random(7)
    accepted = 0
    implicit_pairs = sum(len(c.hw.implicit) for c in cases.values())
    conflict_pairs = sum(len(c.hw.C_c) for c in cases.values())
    for key, case in cases.items():
        xs = set(case.rel.x)
        oplan = oracle_plans[key]
        plans = [] if oplan is None else [oplan]
        if case.plan is not None:
            plans.append(case.plan)
            plans.extend(_perturbed(case, rng))
        if oplan is not None:
            for tk, route in oplan.routes.items():
                outside.extend((key, tk, arc) for arc in route.arcs if XKey(tk, *arc) not in xs)
        for plan in plans:
            assert check_plan(plan, case.family, case.spec, case.config).ok
            accepted += 1
            breaches.extend((key, b) for b in _preprocessing_breaches(case, plan))
    verdict(
        7, "preprocessing soundness",
        not outside and not breaches,
        f"{accepted} accepted plans; {implicit_pairs} implicit and {conflict_pairs} conflict pairs; "
        f"oracle arcs outside X {outside[:3]}, breaches {breaches[:3]}",
    )


def test_criterion_8_lp_round_trip(suite, robust_suite, verdict):
    models = [c.model for c in suite[0].values()] + [c.model for c in robust_suite.values()]
    broken = []
    for n, m in enumerate(models):
        text = emit_model_text(m)
        back = import_model_text(text)
        if back.variables != m.variables or back.constraints != m.constraints or emit_model_text(back) != text:
            broken.append(n)
    verdict(8, "LP text round-trip", not broken, f"{len(models)} models, {len(broken)} differ")
