from .program import (INF, FEASIBILITY_TOL, INTEGRALITY_TOL,
                      MixedIntegerProgram, ProgramError, SolverSolution, Status)
from .backend import solve_lp, solve_mip
from .simplex import core_name

__all__ = [
    "INF", "FEASIBILITY_TOL", "INTEGRALITY_TOL",
    "MixedIntegerProgram", "ProgramError", "SolverSolution", "Status",
    "solve_lp", "solve_mip", "core_name",
]
