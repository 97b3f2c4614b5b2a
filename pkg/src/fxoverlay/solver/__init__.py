from .qp import (
    INFEASIBLE,
    NUMERICAL_FAILURE,
    OPTIMAL,
    TOLERANCES,
    QPSolution,
    Tolerances,
    solve_qp,
)
from .miqp import MIQPSolution, brute_force, solve_miqp
