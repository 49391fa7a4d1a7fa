import pytest

from utils import solver_utils
from utils.errors import SolverFailureError
from utils.solver_utils import SolverAttemptError, available_solvers, fallback_operation, retry_on_solver_error


@pytest.fixture
def installed(monkeypatch):
    monkeypatch.setattr(solver_utils.cp, "installed_solvers", lambda: ["FIRST", "SECOND"])


def test_retry_moves_to_the_next_solver(installed):
    calls = []

    @retry_on_solver_error(solvers=["FIRST", "SECOND"])
    def attempt(value, solver):
        calls.append(solver)
        if solver == "FIRST":
            raise SolverAttemptError("inaccurate")
        return value * 2

    assert attempt(21) == 42
    assert calls == ["FIRST", "SECOND"]


def test_retry_skips_missing_solvers_and_honours_call_time_chain(installed):
    calls = []

    @retry_on_solver_error(solvers=["FIRST"])
    def attempt(solver):
        calls.append(solver)
        return solver

    assert attempt(solvers=["MISSING", "SECOND"]) == "SECOND"
    assert calls == ["SECOND"]


def test_retry_raises_with_diagnostics_when_every_solver_fails(installed):
    @retry_on_solver_error(solvers=["FIRST", "SECOND", "MISSING"])
    def attempt(solver):
        raise ArithmeticError(f"{solver} diverged")

    with pytest.raises(SolverFailureError) as excinfo:
        attempt()
    failures = excinfo.value.diagnostics["failures"]
    assert failures["MISSING"] == "not installed"
    assert failures["FIRST"] == "FIRST diverged"


def test_retry_lets_unrelated_errors_through(installed):
    @retry_on_solver_error(solvers=["FIRST", "SECOND"])
    def attempt(solver):
        raise KeyError(solver)

    with pytest.raises(KeyError):
        attempt()


def test_fallback_operation_builds_result_from_error():
    @fallback_operation(fallback_result=lambda error, item: f"{item} failed: {error}")
    def work(item):
        raise RuntimeError("boom")

    assert work("a") == "a failed: boom"


def test_fallback_operation_static_value():
    @fallback_operation(fallback_result=None, log_error=False)
    def work():
        raise RuntimeError("boom")

    assert work() is None


def test_available_solvers_keeps_chain_order(installed):
    assert available_solvers(["SECOND", "MISSING", "FIRST"]) == ["SECOND", "FIRST"]
