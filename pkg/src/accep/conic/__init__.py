from accep.conic.program import ConvexProgram, SocBlock
from accep.conic.solver import (
    BACKENDS,
    DEFAULT_TOL,
    ResidualReport,
    Solution,
    SolverError,
    check_solution,
    solve,
)

__all__ = [
    "BACKENDS",
    "DEFAULT_TOL",
    "ConvexProgram",
    "ResidualReport",
    "SocBlock",
    "Solution",
    "SolverError",
    "check_solution",
    "solve",
]
