from railnet.validate.check import RULES, ValidationReport, Violation, check_plan, recompute_cost
from railnet.validate.oracle import OracleLimits, OracleRefusal, brute_force_optimum
from railnet.validate.plan import ExtractionError, PlanSolution, Route, extract_plan

__all__ = [
    "RULES",
    "ExtractionError",
    "OracleLimits",
    "OracleRefusal",
    "PlanSolution",
    "Route",
    "ValidationReport",
    "Violation",
    "brute_force_optimum",
    "check_plan",
    "extract_plan",
    "recompute_cost",
]
