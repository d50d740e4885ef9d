from .annealing import Cooling, InvalidParamsError, SaParams, solve_sa
from .dp import solve_dp
from .exhaustive import all_makespans, solve_exhaustive
from .mip import MipModel, build_mip, emit_mip, parse_lp, schedule_to_solution, validate_mip_solution
from .result import InstanceTooLargeError, SolverResult

__all__ = [
    "Cooling", "InvalidParamsError", "SaParams", "solve_sa", "solve_dp", "all_makespans",
    "solve_exhaustive", "MipModel", "build_mip", "emit_mip", "parse_lp", "schedule_to_solution",
    "validate_mip_solution", "InstanceTooLargeError", "SolverResult",
]
