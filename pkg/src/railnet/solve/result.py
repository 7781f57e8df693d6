from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence


class SolveStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    TIMED_OUT_NO_SOLUTION = "TimedOut-NoSolution"

    @property
    def has_solution(self) -> bool:
        return self in (SolveStatus.OPTIMAL, SolveStatus.FEASIBLE)


@dataclass(frozen=True)
class SolveLimits:
    time_limit_seconds: float = 7200.0
    absolute_gap: float = 0.0
    relative_gap: float = 0.0
    node_limit: int | None = None
    integrality_tolerance: float = 1e-9

    def __post_init__(self) -> None:
        for name in ("time_limit_seconds", "absolute_gap", "relative_gap", "integrality_tolerance"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.node_limit is not None and self.node_limit < 0:
            raise ValueError("node_limit must be nonnegative")


@dataclass
class MilpSolution:
    status: SolveStatus
    values: Sequence[int | Fraction] | None = None
    objective: int | Fraction | None = None
    best_bound: float | None = None
    nodes: int = 0
    runtime_seconds: float = 0.0

    @property
    def gap_percent(self) -> float | None:
        if self.objective is None or self.best_bound is None:
            return None
        if self.objective == 0:
            return 0.0
        return max(0.0, float(self.objective - Fraction(self.best_bound)) / abs(float(self.objective)) * 100.0)
