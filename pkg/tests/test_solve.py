from __future__ import annotations

import itertools
import warnings
from fractions import Fraction

import highspy
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from railnet.generate import generate_family
from railnet.milp import GE, LE, MilpModel, build_deterministic
from railnet.preprocess import build_headway_sets, build_relevant_sets
from railnet.solve import (
    LPFormatError,
    SolutionFormatError,
    SolveLimits,
    SolveStatus,
    emit_model_text,
    format_number,
    import_model_text,
    import_solution,
    objective_granularity,
    solve_branch_and_bound,
)

from helpers import suite_params


def _toy():
    m = MilpModel()
    x = m.add_variable("x", True, objective=5)
    m.add_constraint([(x, 1)], GE, 1, "eq2")
    return m


def _suite_model(seed):
    spec, fam, cfg = generate_family(seed, suite_params(seed))
    rel = build_relevant_sets(fam, spec, cfg)
    return build_deterministic(fam, rel, build_headway_sets(fam, rel, spec, cfg), spec, cfg)


def test_emit_one_variable_model():
    text = emit_model_text(_toy())
    lines = text.splitlines()
    assert " obj: 5 x" in lines
    assert sum(1 for ln in lines if ln.startswith(" eq2_")) == 1
    binaries = lines[lines.index("Binaries") + 1: lines.index("End")]
    assert [b.strip() for b in binaries] == ["x"]
    assert text.endswith("End\n") and "\r" not in text


def test_emit_empty_model_round_trips():
    text = emit_model_text(MilpModel())
    for header in ("Minimize", "Subject To", "Bounds", "End"):
        assert header in text
    back = import_model_text(text)
    assert back.variables == [] and back.constraints == []


def test_format_number_is_exact():
    assert format_number(5) == "5"
    assert format_number(Fraction(-1, 4)) == "-0.25"
    assert Fraction(format_number(Fraction(7, 8))) == Fraction(7, 8)
    # no finite decimal: refusing keeps the text exact
    with pytest.raises(LPFormatError):
        format_number(Fraction(1, 3))


@pytest.mark.parametrize("seed", [1, 9, 23])
def test_round_trip_is_exact(seed):
    m = _suite_model(seed)
    text = emit_model_text(m)
    back = import_model_text(text)
    assert back.variables == m.variables
    assert back.constraints == m.constraints
    assert emit_model_text(back) == text


def test_import_rejects_garbage():
    with pytest.raises(LPFormatError):
        import_model_text("Minimize\n obj: 3 x +\nSubject To\n c1: x >= \nEnd\n")


def test_branch_and_bound_trivial():
    sol = solve_branch_and_bound(_toy())
    assert sol.status is SolveStatus.OPTIMAL
    assert sol.objective == 5 and list(sol.values) == [1]
    assert sol.gap_percent == 0


def test_branch_and_bound_contradictory_bounds():
    m = MilpModel()
    x = m.add_variable("x", True)
    m.add_constraint([(x, 1)], GE, 1, "eq2")
    m.add_constraint([(x, 1)], LE, 0, "eq2")
    assert solve_branch_and_bound(m).status is SolveStatus.INFEASIBLE


def _brute_force(m: MilpModel):
    best = None
    domains = [range(v.lo, v.hi + 1) for v in m.variables]
    for vals in itertools.product(*domains):
        if not m.violated(vals):
            obj = m.objective_value(vals)
            best = obj if best is None else min(best, obj)
    return best


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.integers(-5, 9), min_size=2, max_size=4),
    st.lists(
        st.tuples(st.lists(st.integers(-3, 3), min_size=4, max_size=4), st.sampled_from([LE, GE]), st.integers(-4, 6)),
        min_size=1,
        max_size=4,
    ),
    st.integers(1, 3),
)
def test_branch_and_bound_matches_enumeration(costs, rows, hi):
    m = MilpModel()
    for n, c in enumerate(costs):
        m.add_variable(f"v{n}", n % 2 == 0, 0, 1 if n % 2 == 0 else hi, c)
    for coefs, sense, rhs in rows:
        terms = [(n, c) for n, c in enumerate(coefs[: len(costs)]) if c]
        if terms:
            m.add_constraint(terms, sense, rhs, "eq5")
    sol = solve_branch_and_bound(m)
    expected = _brute_force(m)
    if expected is None:
        assert sol.status is SolveStatus.INFEASIBLE
    else:
        assert sol.status is SolveStatus.OPTIMAL
        assert sol.objective == expected
        assert not m.violated(sol.values)
        assert sol.best_bound <= float(sol.objective) + 1e-9


def test_branch_and_bound_is_deterministic():
    m = _suite_model(9)
    a, b = solve_branch_and_bound(m), solve_branch_and_bound(m)
    assert list(a.values) == list(b.values) and a.nodes == b.nodes


def test_node_limit_reports_partial_result():
    m = _suite_model(9)
    full = solve_branch_and_bound(m)
    assert full.nodes > 1
    part = solve_branch_and_bound(m, SolveLimits(node_limit=1))
    assert part.status in (SolveStatus.FEASIBLE, SolveStatus.TIMED_OUT_NO_SOLUTION)
    assert part.best_bound <= float(full.objective) + 1e-6
    if part.status is SolveStatus.FEASIBLE:
        assert part.objective >= full.objective
        assert part.best_bound <= float(part.objective)


def test_limits_must_be_nonnegative():
    with pytest.raises(ValueError):
        SolveLimits(time_limit_seconds=-1)
    with pytest.raises(ValueError):
        SolveLimits(node_limit=-2)


def test_objective_granularity():
    m = MilpModel()
    m.add_variable("a", True, objective=30)
    m.add_variable("b", True, objective=Fraction(45, 2))
    assert objective_granularity(m) == Fraction(15, 2)


def test_import_solution_values():
    m = MilpModel()
    m.add_variable("x(k1,A,B,1)", True)
    m.add_variable("d(k1,A,B,1)", False, 0, 100, 1)
    sol = import_solution("# external\nx(k1,A,B,1) 1\nd(k1,A,B,1) 12.0000001\n", m)
    assert list(sol.values) == [1, 12]
    assert sol.objective == 12


def test_import_solution_unknown_name():
    with pytest.raises(SolutionFormatError, match=r"line 2: unknown variable y\(A,B,1\)"):
        import_solution("x 1\ny(A,B,1) 1\n", _toy())


def test_import_solution_malformed_line():
    with pytest.raises(SolutionFormatError, match="line 1"):
        import_solution("x 1 2\n", _toy())
    with pytest.raises(SolutionFormatError, match="line 1"):
        import_solution("x one\n", _toy())


def test_import_solution_missing_defaults_to_zero():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sol = import_solution("", _toy())
    assert list(sol.values) == [0]
    assert any("missing" in str(w.message) for w in caught)


def test_external_solver_round_trip(tmp_path):
    """The LP text is read by HiGHS; its solution re-imports with the same objective."""
    m = _suite_model(9)
    path = tmp_path / "model.lp"
    path.write_text(emit_model_text(m), encoding="utf-8")
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    assert h.readModel(str(path)) == highspy.HighsStatus.kOk
    h.run()
    lp = h.getLp()
    text = "\n".join(f"{lp.col_names_[n]} {v:.9f}" for n, v in enumerate(h.getSolution().col_value))
    sol = import_solution(text, m)
    assert not m.violated(sol.values)
    assert sol.objective == solve_branch_and_bound(m).objective
