"""
Exception hierarchy shared by the numerical modules and the CLI handlers.

handlers/error_handler.py maps these onto process exit codes.
"""
from typing import Any, Dict, Optional


class IsacError(Exception):
    """Base class for every error raised by this project."""


class InvalidInputError(IsacError, ValueError):
    """Arguments violate a documented precondition."""


class DegeneratePowerError(IsacError):
    """A ratio metric was requested at zero transmit power."""


class IllConditionedError(IsacError):
    """The Fisher information matrix is too close to singular to invert."""

    def __init__(self, message: str, condition_number: float):
        super().__init__(message)
        self.condition_number = condition_number


class DegenerateExpansionPointError(IsacError):
    """A log term evaluates to a non-positive value at the expansion point."""


class OverBudgetError(IsacError):
    """The optimised power exceeds P_max, so no artificial noise can be sent."""


class InfeasibleScenarioError(IsacError):
    """No feasible point was found; `constraint` names the worst violation."""

    def __init__(self, message: str, constraint: Optional[str] = None):
        super().__init__(message)
        self.constraint = constraint


class SolverFailureError(IsacError):
    """Every backend in the solver chain failed."""

    def __init__(self, message: str, iteration: Optional[int] = None,
                 diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.iteration = iteration
        self.diagnostics = diagnostics or {}


class ConfigError(IsacError):
    """Scenario file could not be parsed or validated."""

    def __init__(self, message: str, path: Optional[str] = None, section: Optional[str] = None,
                 key: Optional[str] = None, line: Optional[int] = None):
        location = ""
        if path:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            if section:
                location += f" [{section}]"
            if key:
                location += f" {key}"
            location += ": "
        super().__init__(f"{location}{message}")
        self.path = path
        self.section = section
        self.key = key
        self.line = line


class OutputError(IsacError):
    """Result files could not be written."""


__all__ = [
    'IsacError', 'InvalidInputError', 'DegeneratePowerError', 'IllConditionedError',
    'DegenerateExpansionPointError', 'OverBudgetError', 'InfeasibleScenarioError',
    'SolverFailureError', 'ConfigError', 'OutputError',
]
