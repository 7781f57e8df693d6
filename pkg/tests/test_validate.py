from __future__ import annotations

import copy
import dataclasses
import json
from fractions import Fraction

import pytest

from railnet.core import (
    BuildConfig,
    InfrastructureSpec,
    Node,
    RelationKind,
    Scenario,
    TimetableFamily,
    TimingRelation,
    TrainKey,
)
from railnet.generate import GeneratorParams, generate_family
from railnet.solve import MilpSolution, SolveStatus
from railnet.validate import (
    RULES,
    ExtractionError,
    OracleLimits,
    OracleRefusal,
    PlanSolution,
    Route,
    brute_force_optimum,
    check_plan,
    extract_plan,
    recompute_cost,
)

from helpers import chain_spec, family, section, solve_family, train

NO_RED = BuildConfig.preset("C")
K = lambda name, sc="s1": TrainKey(sc, name)  # noqa: E731


def _single_track(tracks=1, headway=4):
    return InfrastructureSpec(
        (Node("A", crossing_time_minutes=1), Node("B", crossing_time_minutes=1)),
        (section("A", "B", {"G": 10}, tracks=tracks, headway=headway, length=5),),
    )


def test_extract_one_train_toy():
    spec = chain_spec((10, 10))
    fam = family(train("k", "A", "C", 0, 40))
    model, sol, plan, report, (rel, _) = solve_family(spec, fam, NO_RED)
    (path,) = rel.paths[K("k")]
    assert plan.routes[K("k")].nodes == path.nodes
    assert len(plan.built_arcs) == 2
    assert report.ok
    assert plan.active_scenarios == {"s1"} and plan.active_trains == {K("k")}


def test_extract_robust_drops_inactive_scenario():
    spec = chain_spec((10, 10))
    scen = (
        Scenario("s1", (train("k1", "A", "B", 0, 40),), penalty=1),
        Scenario("s2", (train("k1", "A", "C", 0, 40),), penalty=1),
    )
    fam = TimetableFamily(scen, Fraction(1, 2))
    model, sol, plan, report, _ = solve_family(spec, fam, NO_RED)
    assert plan.active_scenarios == {"s1"}
    assert set(plan.routes) == {K("k1", "s1")}
    assert sol.objective == 101 == recompute_cost(plan, spec, fam)
    assert report.ok


def test_extract_rejects_fractional_binary():
    spec = chain_spec((10, 10))
    fam = family(train("k", "A", "C", 0, 40))
    model, sol, *_ = solve_family(spec, fam, NO_RED)
    values = list(sol.values)
    values[model.var("y(A,B,1)").id] = Fraction(1, 2)
    with pytest.raises(ExtractionError, match="y\\(A,B,1\\)"):
        extract_plan(MilpSolution(SolveStatus.FEASIBLE, values, 0), model, fam)


def test_empty_plan_on_zero_train_instance():
    spec = chain_spec((10, 10))
    fam = TimetableFamily((Scenario("s1", ()),))
    plan = PlanSolution(active_scenarios={"s1"})
    assert check_plan(plan, fam, spec).ok
    assert recompute_cost(plan, spec) == 0


def test_recompute_cost_two_arcs_and_a_link():
    spec = chain_spec((10, 10))
    plan = PlanSolution(built_arcs={("A", "B", 1), ("B", "C", 1)}, built_links={("B", "A", "C")})
    assert recompute_cost(plan, spec) == 210


def test_recompute_cost_counts_reductions_and_penalties():
    spec = chain_spec((10, 10), time_reduction_cost=7, headway_reduction_cost=3, length=20)
    scen = (Scenario("s1", (train("k1", "A", "B", 0, 40),)), Scenario("s2", (), penalty=5))
    fam = TimetableFamily(scen, Fraction(1, 2))
    plan = PlanSolution(built_arcs={("A", "B", 1)}, reductions={("A", "B"): (2, 1)}, active_scenarios={"s1"})
    assert recompute_cost(plan, spec, fam) == 100 + 14 + 3 + 5


def _chain_plan():
    spec = chain_spec((10, 10))
    fam = family(train("k", "A", "C", 0, 40))
    plan = PlanSolution(
        built_arcs={("A", "B", 1), ("B", "C", 1)},
        built_links={("B", "A", "C")},
        routes={K("k"): Route(("A", "B", "C"), (1, 1), ((0, 10), (12, 22)))},
        active_scenarios={"s1"},
        active_trains={K("k")},
    )
    return spec, fam, plan


def test_valid_hand_plan():
    spec, fam, plan = _chain_plan()
    assert check_plan(plan, fam, spec, NO_RED).ok


@pytest.mark.parametrize(
    "mutate, rule",
    [
        (lambda p: p.built_links.clear(), "link"),
        (lambda p: p.built_arcs.discard(("B", "C", 1)), "path"),
        (lambda p: p.routes.update({K("k"): Route(("A", "B", "C"), (1, 1), ((0, 11), (12, 22)))}), "travel-time"),
        (lambda p: p.routes.update({K("k"): Route(("A", "B", "C"), (1, 1), ((0, 10), (16, 26)))}), "max-stop"),
        (lambda p: p.routes.update({K("k"): Route(("A", "B", "C"), (1, 1), ((0, 10), (9, 19)))}), "node-timing"),
        (lambda p: p.routes.update({K("k"): Route(("A", "B", "C"), (1, 1), ((30, 40), (40, 50)))}), "time-bounds"),
        (lambda p: p.routes.pop(K("k")), "path"),
        (lambda p: p.reductions.update({("A", "B"): (5, 0)}), "reduction-cap"),
        (lambda p: p.built_arcs.add(("A", "B", 2)) or p.built_arcs.discard(("A", "B", 1)), "track-order"),
        (lambda p: p.active_scenarios.clear(), "coverage-share"),
    ],
)
def test_hand_plan_mutations(mutate, rule):
    spec, fam, plan = _chain_plan()
    mutate(plan)
    report = check_plan(plan, fam, spec, NO_RED)
    assert rule in report.rules()
    assert rule in RULES


def test_descending_train_may_not_use_ascending_only_track():
    spec = chain_spec((10,), tracks=4)
    fam = family(train("k", "B", "A", 0, 40))
    plan = PlanSolution(
        built_arcs={("A", "B", 1), ("A", "B", 2), ("A", "B", 3)},
        routes={K("k"): Route(("B", "A"), (3,), ((0, 10),))},
        active_scenarios={"s1"},
        active_trains={K("k")},
    )
    assert "track-order" in check_plan(plan, fam, spec, BuildConfig.preset("A")).rules()


def test_following_headway_mutation():
    spec = _single_track()
    fam = family(train("k1", "A", "B", 0, 10), train("k2", "A", "B", 0, 14))
    _, sol, plan, report, _ = solve_family(spec, fam, NO_RED)
    assert report.ok
    assert plan.routes[K("k2")].times == ((4, 14),)
    same = copy.deepcopy(plan)
    assert check_plan(same, fam, spec, NO_RED).ok
    plan.routes[K("k2")] = dataclasses.replace(plan.routes[K("k2")], times=((3, 13),))
    report = check_plan(plan, fam, spec, NO_RED)
    assert report.rules() == {"headway-following"}
    assert "A-B" in report.violations[0].location or "A,B" in report.violations[0].location


def test_crossing_and_conflict_rules():
    spec = _single_track(tracks=2)
    fam = family(train("k1", "A", "B", 0, 40), train("k2", "B", "A", 0, 40))
    base = dict(built_arcs={("A", "B", 1)}, active_scenarios={"s1"}, active_trains={K("k1"), K("k2")})
    meet = PlanSolution(routes={K("k1"): Route(("A", "B"), (1,), ((0, 10),)), K("k2"): Route(("B", "A"), (1,), ((5, 15),))}, **base)
    assert "conflict" in check_plan(meet, fam, spec, NO_RED).rules()
    # k2 leaves B the minute k1 arrives; the crossing time at B is 1
    tight = PlanSolution(routes={K("k1"): Route(("A", "B"), (1,), ((0, 10),)), K("k2"): Route(("B", "A"), (1,), ((10, 20),))}, **base)
    assert check_plan(tight, fam, spec, NO_RED).rules() == {"headway-crossing"}
    fine = PlanSolution(routes={K("k1"): Route(("A", "B"), (1,), ((0, 10),)), K("k2"): Route(("B", "A"), (1,), ((11, 21),))}, **base)
    assert check_plan(fine, fam, spec, NO_RED).ok


def test_relation_rules():
    spec = chain_spec((10, 10))
    rels = (
        TimingRelation(RelationKind.DEPARTURE_FREQUENCY, "k1", "k2", "A", 10, 10),
        TimingRelation(RelationKind.TRANSFER, "k1", "k3", "C", 2, 5),
    )
    fam = family(train("k1", "A", "C", 0, 40), train("k2", "A", "C", 0, 60), train("k3", "C", "A", 0, 80), relations=rels)
    routes = {
        K("k1"): Route(("A", "B", "C"), (1, 1), ((0, 10), (10, 20))),
        K("k2"): Route(("A", "B", "C"), (1, 1), ((10, 20), (20, 30))),
        K("k3"): Route(("C", "B", "A"), (2, 2), ((23, 33), (33, 43))),
    }
    plan = PlanSolution(
        built_arcs={("A", "B", 1), ("B", "C", 1), ("A", "B", 2), ("B", "C", 2)},
        built_links={("B", "A", "C")},
        routes=routes,
        active_scenarios={"s1"},
        active_trains=set(routes),
    )
    assert check_plan(plan, fam, spec, NO_RED).ok
    late = dict(routes)
    late[K("k3")] = Route(("C", "B", "A"), (2, 2), ((26, 36), (36, 46)))
    assert check_plan(dataclasses.replace(plan, routes=late), fam, spec, NO_RED).rules() == {"transfer"}
    off = dict(routes)
    off[K("k2")] = Route(("A", "B", "C"), (1, 1), ((11, 21), (21, 31)))
    assert "frequency" in check_plan(dataclasses.replace(plan, routes=off), fam, spec, NO_RED).rules()


def test_optional_count_rule():
    spec = chain_spec((10,))
    sc = Scenario(
        "s1",
        (train("k1", "A", "B", 0, 40, optional=True, penalty=1), train("k2", "B", "A", 0, 40, optional=True, penalty=1)),
        demanded_optional=1,
    )
    fam = TimetableFamily((sc,))
    plan = PlanSolution(active_scenarios={"s1"})
    assert check_plan(plan, fam, spec, NO_RED).rules() == {"optional-count"}


def test_plan_json_round_trip():
    _, _, plan = _chain_plan()
    doc = json.loads(json.dumps(plan.to_json()))
    assert PlanSolution.from_json(doc) == plan
    with pytest.raises(ExtractionError):
        PlanSolution.from_json({"built_arcs": 3})


def test_oracle_one_train_chain():
    spec = chain_spec((10, 10), cost=100, link_cost=10)
    cost, plan = brute_force_optimum(family(train("k", "A", "C", 0, 40)), spec, NO_RED)
    assert cost == 210
    assert plan.built_arcs == {("A", "B", 1), ("B", "C", 1)}


def test_oracle_forced_meet_needs_second_track():
    spec = _single_track(tracks=2)
    fam = family(train("k1", "A", "B", 10, 20), train("k2", "B", "A", 10, 20))
    cost, plan = brute_force_optimum(fam, spec, NO_RED)
    assert cost == 200
    assert plan.built_arcs == {("A", "B", 1), ("A", "B", 2)}
    assert check_plan(plan, fam, spec, NO_RED).ok


def test_oracle_infeasible_and_refusal():
    spec = _single_track(tracks=1)
    fam = family(train("k1", "A", "B", 10, 20), train("k2", "B", "A", 10, 20))
    assert brute_force_optimum(fam, spec, NO_RED) is None
    big, bfam, cfg = generate_family(1, GeneratorParams(nodes=8, trains_per_type={"G": 3}))
    with pytest.raises(OracleRefusal, match="nodes"):
        brute_force_optimum(bfam, big, cfg)
    small, sfam, cfg = generate_family(1, GeneratorParams(nodes=4, trains_per_type={"G": 3}))
    with pytest.raises(OracleRefusal, match="trains"):
        brute_force_optimum(sfam, small, cfg, OracleLimits(max_trains=2))


def test_oracle_matches_solver_with_relations():
    spec = chain_spec((10, 10))
    rels = (TimingRelation(RelationKind.DEPARTURE_FREQUENCY, "k1", "k2", "A", 3, 5),)
    fam = family(train("k1", "A", "C", 0, 40), train("k2", "A", "C", 0, 40), train("k3", "C", "A", 0, 40), relations=rels)
    for cfg in (NO_RED, BuildConfig.preset("B")):
        cost, plan = brute_force_optimum(fam, spec, cfg)
        _, sol, splan, report, _ = solve_family(spec, fam, cfg)
        assert sol.objective == cost
        assert report.ok and check_plan(plan, fam, spec, cfg).ok


def test_track_rules_are_conservative_on_suite_sample():
    """Track-choice rules can only make the optimum more expensive."""
    from helpers import suite_params

    for seed in range(1, 11):
        spec, fam, cfg = generate_family(seed, suite_params(seed))
        with_rules = brute_force_optimum(fam, spec, cfg)[0]
        without = brute_force_optimum(fam, spec, dataclasses.replace(cfg, track_rules=False))[0]
        assert with_rules >= without
