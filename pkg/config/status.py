
# Run statuses
STATUS_CONVERGED = "converged"
STATUS_ITERATION_LIMIT = "iteration-limit"
STATUS_INFEASIBLE = "infeasible"
STATUS_NUMERICAL_FAILURE = "numerical-failure"

# Solution statuses (conic core)
SOLUTION_OPTIMAL = "optimal"
SOLUTION_INFEASIBLE = "infeasible"
SOLUTION_NUMERICAL_FAILURE = "numerical-failure"

# CLI exit codes
EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_NUMERICAL_FAILURE = 3
EXIT_CONFIG_ERROR = 4

# Run status -> exit code; iteration-limit still yields usable beamformers
STATUS_EXIT_CODES = {
    STATUS_CONVERGED: EXIT_OK,
    STATUS_ITERATION_LIMIT: EXIT_OK,
    STATUS_INFEASIBLE: EXIT_INFEASIBLE,
    STATUS_NUMERICAL_FAILURE: EXIT_NUMERICAL_FAILURE,
}

__all__ = [
    'STATUS_CONVERGED', 'STATUS_ITERATION_LIMIT', 'STATUS_INFEASIBLE', 'STATUS_NUMERICAL_FAILURE',
    'SOLUTION_OPTIMAL', 'SOLUTION_INFEASIBLE', 'SOLUTION_NUMERICAL_FAILURE',
    'EXIT_OK', 'EXIT_INFEASIBLE', 'EXIT_NUMERICAL_FAILURE', 'EXIT_CONFIG_ERROR', 'STATUS_EXIT_CODES',
]
