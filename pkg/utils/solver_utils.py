import logging
from functools import wraps
from typing import Any, Callable, List, Optional, Sequence

import cvxpy as cp

from config.constants import SOLVER_CHAIN
from utils.errors import SolverFailureError

logger = logging.getLogger(__name__)


class SolverAttemptError(Exception):
    """Raised inside a solve attempt to move on to the next backend solver."""


def retry_on_solver_error(solvers: Optional[Sequence[str]] = None,
                          allowed_exceptions: tuple = (cp.error.SolverError, SolverAttemptError,
                                                       ArithmeticError, ValueError)) -> Callable:
    """
    Decorator to retry a solve with the next solver of the chain.

    The wrapped function receives the solver name as the `solver` keyword.
    When a `solvers` keyword is passed at call time it replaces the chain.

    Args:
        solvers: Ordered solver names; defaults to ISAC_SOLVERS
        allowed_exceptions: Exceptions that trigger the next solver

    Returns:
        The decorated function with fallback capability
    """
    def decorator(func: Callable) -> Callable:
        @wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            chain = list(kwargs.pop("solvers", None) or solvers or SOLVER_CHAIN)
            available = set(cp.installed_solvers())
            failures = {}
            for attempt, name in enumerate(chain, start=1):
                if name not in available:
                    failures[name] = "not installed"
                    logger.warning(f"Solver {name} is not installed, skipping")
                    continue
                try:
                    return func(*args, solver=name, **kwargs)
                except allowed_exceptions as e:
                    failures[name] = str(e)
                    logger.warning(f"Attempt {attempt} with {name} failed for {func.__name__}: {e}")
            logger.error(f"All solvers failed for {func.__name__}: {failures}")
            raise SolverFailureError(f"All solvers failed: {failures}", diagnostics={"failures": failures})
        return wrapper
    return decorator


def fallback_operation(fallback_result: Any = None, log_error: bool = True) -> Callable:
    """
    Decorator to keep a batch going when one item fails.

    Args:
        fallback_result: Value to return on failure; a callable is invoked as
            fallback_result(error, *args, **kwargs) to build it
        log_error: Whether to log the error
    """
    def decorator(func: Callable) -> Callable:
        @wraps(func)
        def wrapper(*args, **kwargs):
            try:
                return func(*args, **kwargs)
            except Exception as e:
                if log_error:
                    logger.error(f"Operation {func.__name__} failed: {e}", exc_info=True)
                if callable(fallback_result):
                    return fallback_result(e, *args, **kwargs)
                return fallback_result

        return wrapper
    return decorator


def available_solvers(chain: Optional[Sequence[str]] = None) -> List[str]:
    installed = set(cp.installed_solvers())
    return [name for name in (chain or SOLVER_CHAIN) if name in installed]


def log_solver_status() -> List[str]:
    """Log which solvers of the configured chain are usable."""
    usable = available_solvers()
    if usable:
        logger.info(f"Conic solvers available: {', '.join(usable)} (chain {', '.join(SOLVER_CHAIN)})")
    else:
        logger.warning(f"None of the configured solvers {SOLVER_CHAIN} is installed")
    return usable


__all__ = ['SolverAttemptError', 'retry_on_solver_error', 'fallback_operation', 'available_solvers',
           'log_solver_status']
