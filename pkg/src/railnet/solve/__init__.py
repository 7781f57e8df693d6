from railnet.solve.bnb import SolverError, objective_granularity, solve_branch_and_bound
from railnet.solve.lpformat import (
    LPFormatError,
    SolutionFormatError,
    emit_model_text,
    format_number,
    import_model_text,
    import_solution,
)
from railnet.solve.result import MilpSolution, SolveLimits, SolveStatus

__all__ = [
    "LPFormatError",
    "MilpSolution",
    "SolutionFormatError",
    "SolveLimits",
    "SolveStatus",
    "SolverError",
    "emit_model_text",
    "format_number",
    "import_model_text",
    "import_solution",
    "objective_granularity",
    "solve_branch_and_bound",
]
