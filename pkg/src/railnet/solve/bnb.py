"""Best-first branch-and-bound; LP relaxations are solved by HiGHS with warm starts."""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from fractions import Fraction

import highspy
import numpy as np

from railnet.milp import EQ, GE, LE, MilpModel
from railnet.solve.result import MilpSolution, SolveLimits, SolveStatus

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


def objective_granularity(model: MilpModel) -> Fraction:
    """Largest g such that every integer point has objective in constant + g*Z."""
    coefs = [Fraction(v.objective) for v in model.variables if v.objective]
    if not coefs:
        return Fraction(0)
    lcm = 1
    for c in coefs:
        lcm = lcm * c.denominator // math.gcd(lcm, c.denominator)
    g = 0
    for c in coefs:
        g = math.gcd(g, int(c * lcm))
    return Fraction(g, lcm)


class _Relaxation:
    """One HiGHS LP kept alive across nodes; each node only changes column bounds."""

    def __init__(self, model: MilpModel):
        n = len(model.variables)
        self.n = n
        self.lo = np.array([float(v.lo) for v in model.variables])
        self.hi = np.array([float(v.hi) for v in model.variables])
        starts, index, value, row_lo, row_hi = [0], [], [], [], []
        for con in model.constraints:
            for v, c in con.terms:
                index.append(v)
                value.append(float(c))
            starts.append(len(index))
            rhs = float(con.rhs)
            row_lo.append(rhs if con.sense in (EQ, GE) else -highspy.kHighsInf)
            row_hi.append(rhs if con.sense in (EQ, LE) else highspy.kHighsInf)
        lp = highspy.HighsLp()
        lp.num_col_ = n
        lp.num_row_ = len(model.constraints)
        lp.col_cost_ = np.array([float(v.objective) for v in model.variables])
        lp.col_lower_ = self.lo
        lp.col_upper_ = self.hi
        lp.row_lower_ = np.array(row_lo)
        lp.row_upper_ = np.array(row_hi)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kRowwise
        lp.a_matrix_.start_ = np.array(starts, dtype=np.int32)
        lp.a_matrix_.index_ = np.array(index, dtype=np.int32)
        lp.a_matrix_.value_ = np.array(value)
        self.h = highspy.Highs()
        self.h.setOptionValue("output_flag", False)
        self.h.setOptionValue("presolve", "off")
        self.h.setOptionValue("threads", 1)
        self.h.passModel(lp)
        self.cols = np.arange(n, dtype=np.int32)

    def solve(self, lo, hi):
        self.h.changeColsBounds(self.n, self.cols, lo, hi)
        self.h.run()
        status = self.h.getModelStatus()
        if status in (highspy.HighsModelStatus.kInfeasible, highspy.HighsModelStatus.kUnboundedOrInfeasible):
            return None
        if status != highspy.HighsModelStatus.kOptimal:
            raise SolverError(f"LP relaxation failed: {self.h.modelStatusToString(status)}")
        return self.h.getInfo().objective_function_value, np.array(self.h.getSolution().col_value)


def solve_branch_and_bound(model: MilpModel, limits: SolveLimits | None = None) -> MilpSolution:
    """Exact-verified incumbent with a proven bound, or the best found within limits."""
    limits = limits or SolveLimits()
    start = time.monotonic()
    n = len(model.variables)
    const = Fraction(model.objective_constant)
    tol = limits.integrality_tolerance

    if n == 0:
        if model.violated([]):
            return MilpSolution(SolveStatus.INFEASIBLE)
        return MilpSolution(SolveStatus.OPTIMAL, [], model.objective_constant, float(const))

    lp = _Relaxation(model)
    gran = objective_granularity(model)
    binaries = [v.id for v in model.variables if v.binary]
    generals = [v.id for v in model.variables if not v.binary]

    best_vals: list[int] | None = None
    best_obj: Fraction | None = None
    counter = itertools.count()
    heap: list = []
    nodes = 0
    timed_out = False

    def prunable(bound: float) -> bool:
        if best_obj is None:
            return False
        eps = 1e-6 * max(1.0, abs(float(best_obj)))
        limit = float(best_obj - gran) if gran > 0 else float(best_obj)
        gap_target = max(limits.absolute_gap, limits.relative_gap * abs(float(best_obj)))
        if gran > 0 and gap_target < float(gran):
            return bound > limit + eps
        return bound >= float(best_obj) - gap_target - eps

    def push(bound, depth, lo, hi, x):
        heapq.heappush(heap, (round(bound, 9), -depth, next(counter), lo, hi, x))

    root = lp.solve(lp.lo, lp.hi)
    if root is None:
        return MilpSolution(SolveStatus.INFEASIBLE, runtime_seconds=time.monotonic() - start)
    push(root[0] + float(const), 0, lp.lo.copy(), lp.hi.copy(), root[1])

    while heap:
        if time.monotonic() - start > limits.time_limit_seconds or (
            limits.node_limit is not None and nodes >= limits.node_limit
        ):
            timed_out = True
            break
        bound, negdepth, _, lo, hi, x = heapq.heappop(heap)
        if prunable(bound):
            continue
        nodes += 1
        branch = _pick_branch(x, binaries, generals, tol)
        if branch is None:
            vals = [int(round(v)) for v in x]
            broken = model.violated(vals)
            if broken:
                log.warning("rounded LP point breaks %d row(s) (first: %s); node discarded", len(broken), broken[0].tag)
                continue
            obj = Fraction(model.objective_value(vals))
            if best_obj is None or obj < best_obj:
                best_obj, best_vals = obj, vals
                log.debug("incumbent %s after %d nodes", obj, nodes)
            continue
        v = branch
        floor_v = math.floor(x[v])
        for side in (0, 1):
            clo, chi = lo.copy(), hi.copy()
            if side == 0:
                chi[v] = floor_v
            else:
                clo[v] = floor_v + 1
            if clo[v] > chi[v]:
                continue
            res = lp.solve(clo, chi)
            if res is None:
                continue
            child_bound = res[0] + float(const)
            if prunable(child_bound):
                continue
            push(child_bound, -negdepth + 1, clo, chi, res[1])

    runtime = time.monotonic() - start
    if best_obj is None:
        if timed_out:
            bound = min(entry[0] for entry in heap)
            return MilpSolution(SolveStatus.TIMED_OUT_NO_SOLUTION, best_bound=bound, nodes=nodes, runtime_seconds=runtime)
        return MilpSolution(SolveStatus.INFEASIBLE, nodes=nodes, runtime_seconds=runtime)
    open_bounds = [entry[0] for entry in heap if not prunable(entry[0])]
    if timed_out and open_bounds:
        status = SolveStatus.FEASIBLE
        best_bound = min(min(open_bounds), float(best_obj))
    else:
        status = SolveStatus.OPTIMAL
        best_bound = float(best_obj)
    obj = best_obj.numerator if best_obj.denominator == 1 else best_obj
    return MilpSolution(status, best_vals, obj, best_bound, nodes=nodes, runtime_seconds=runtime)


def _pick_branch(x, binaries, generals, tol):
    for group in (binaries, generals):
        for v in group:
            if abs(x[v] - round(x[v])) > tol:
                return v
    return None
