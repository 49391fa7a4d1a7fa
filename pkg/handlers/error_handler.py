import logging

from config.status import EXIT_CONFIG_ERROR, EXIT_INFEASIBLE, EXIT_NUMERICAL_FAILURE
from utils.errors import (ConfigError, IllConditionedError, InfeasibleScenarioError, InvalidInputError,
                          OutputError, OverBudgetError, SolverFailureError)

logger = logging.getLogger(__name__)


def error_handler(error: BaseException, command: str = "") -> int:
    """Log an error raised by a command and return the process exit code."""
    label = f"Command '{command}'" if command else "Command"

    if isinstance(error, ConfigError):
        logger.error(f"{label} rejected the scenario: {error}")
        return EXIT_CONFIG_ERROR
    if isinstance(error, (InfeasibleScenarioError, OverBudgetError)):
        constraint = getattr(error, "constraint", None)
        logger.error(f"{label} found no feasible point{f' ({constraint})' if constraint else ''}: {error}")
        return EXIT_INFEASIBLE
    if isinstance(error, (SolverFailureError, IllConditionedError)):
        logger.error(f"{label} failed numerically: {error}", exc_info=error)
        return EXIT_NUMERICAL_FAILURE
    if isinstance(error, InvalidInputError):
        logger.error(f"{label} got invalid input: {error}")
        return EXIT_CONFIG_ERROR
    if isinstance(error, OutputError):
        logger.error(f"{label} could not write its results: {error}", exc_info=error)
        return EXIT_NUMERICAL_FAILURE

    # Log the error before we do anything else
    logger.error(f"{label} raised an unexpected error:", exc_info=error)
    return EXIT_NUMERICAL_FAILURE
