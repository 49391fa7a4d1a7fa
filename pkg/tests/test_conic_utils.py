import math

import numpy as np
import pytest

from config.status import SOLUTION_INFEASIBLE, SOLUTION_NUMERICAL_FAILURE, SOLUTION_OPTIMAL
from utils import conic_utils
from utils.conic_utils import (AffineFunctional, AffineMatrixMap, ConicProblem, CvxpyBackend, deembed_complex,
                               dump_problem, embed_complex, encode_logdet, logdet_scale, primal_residual, project_psd,
                               solve)
from utils.errors import InvalidInputError
from tests.conftest import random_psd


def _diagonal_map(n_out=2):
    """1x1 Hermitian variable W mapped to W·I of size n_out."""
    coefficient = np.zeros((n_out, n_out, 1, 1), dtype=complex)
    for i in range(n_out):
        coefficient[i, i, 0, 0] = 1.0
    return AffineMatrixMap({"W": coefficient})


def test_affine_functional_algebra():
    a = AffineFunctional.trace("W", np.eye(2)) + 2.0 * AffineFunctional.scalar("s") - 1.0
    b = 3.0 - a
    assert a.variables() == {"W", "s"}
    values = {"W": np.diag([1.0, 2.0])}
    assert a.evaluate(values, {"s": 0.5}) == pytest.approx(3.0)
    assert b.evaluate(values, {"s": 0.5}) == pytest.approx(0.0)
    assert (-a).evaluate(values, {"s": 0.5}) == pytest.approx(-3.0)


def test_trace_functional_uses_hermitian_part():
    C = np.array([[1.0, 2.0j], [0.0, 1.0]])
    functional = AffineFunctional.trace("W", C)
    np.testing.assert_allclose(functional.matrix_terms["W"], functional.matrix_terms["W"].conj().T)


def test_embed_complex_doubles_the_spectrum(rng):
    H = random_psd(rng, 3)
    embedded = embed_complex(H)
    np.testing.assert_allclose(embedded, embedded.T)
    expected = np.sort(np.repeat(np.linalg.eigvalsh(H), 2))
    np.testing.assert_allclose(np.linalg.eigvalsh(embedded), expected, atol=1e-10)
    np.testing.assert_allclose(deembed_complex(embedded), H, atol=1e-12)


def test_embed_complex_rejects_non_hermitian():
    with pytest.raises(InvalidInputError):
        embed_complex(np.array([[1.0, 1.0j], [1.0j, 1.0]]))
    with pytest.raises(InvalidInputError):
        embed_complex(np.ones((2, 3)))


def test_validate_catches_undeclared_variables():
    problem = ConicProblem()
    problem.add_matrix_var("W", 2)
    problem.add_constraint(AffineFunctional.scalar("t"), ">=", 1.0, name="needs_t")
    with pytest.raises(InvalidInputError):
        problem.validate()
    with pytest.raises(InvalidInputError):
        problem.add_matrix_var("W", 2)
    with pytest.raises(InvalidInputError):
        problem.add_constraint(AffineFunctional.scalar("t"), "<", 1.0)


def test_encode_logdet_rescales_the_bound():
    problem = ConicProblem()
    problem.add_matrix_var("W", 1)
    constraint = encode_logdet(_diagonal_map(), 2 * math.log(3.0), problem, reference={"W": np.array([[3.0]])})
    assert constraint.scale == pytest.approx(1.0 / 3.0)
    assert constraint.bound == pytest.approx(0.0, abs=1e-12)
    assert problem.logdet_constraints == [constraint]


def test_encode_logdet_keeps_an_explicit_scale():
    problem = ConicProblem()
    problem.add_matrix_var("W", 1)
    constraint = encode_logdet(_diagonal_map(), 1.0, problem, reference={"W": np.array([[1e-12]])}, scale=0.5)
    assert constraint.scale == 0.5
    assert constraint.bound == pytest.approx(1.0 + 2 * math.log(0.5))
    for bad in (0.0, -1.0, math.inf):
        with pytest.raises(InvalidInputError):
            encode_logdet(_diagonal_map(), 1.0, problem, scale=bad)


def test_logdet_scale_anchor_and_fallback():
    assert logdet_scale(_diagonal_map(), {"W": np.array([[4.0]])}) == pytest.approx(0.25)
    assert logdet_scale(_diagonal_map(), {"W": np.array([[0.0]])}) == pytest.approx(1.0)
    assert logdet_scale(_diagonal_map().scaled(8.0)) == pytest.approx(0.125)


def test_min_trace_product_gives_smallest_eigenvalue(rng):
    C = random_psd(rng, 3) - 0.5 * np.eye(3)
    problem = ConicProblem()
    power = problem.add_matrix_var("W", 3)
    problem.add_constraint(power, "==", 1.0, name="unit_trace")
    problem.objective = AffineFunctional.trace("W", C)
    solution = solve(problem)
    assert solution.status == SOLUTION_OPTIMAL
    assert solution.objective_value == pytest.approx(np.linalg.eigvalsh(C)[0], abs=1e-5)
    assert np.linalg.eigvalsh(solution.matrix_values["W"])[0] >= 0


def test_logdet_constraint_is_tight_at_optimum():
    problem = ConicProblem()
    power = problem.add_matrix_var("W", 1)
    encode_logdet(_diagonal_map(), 2 * math.log(3.0), problem)
    problem.objective = power
    solution = solve(problem)
    assert solution.status == SOLUTION_OPTIMAL
    assert solution.objective_value == pytest.approx(3.0, rel=1e-4)


def test_log_hypograph_pushes_power_to_the_rate_target():
    problem = ConicProblem()
    power = problem.add_matrix_var("W", 2)
    aux = problem.add_log_hypograph(power + 1.0, "rate")
    problem.add_constraint(aux, ">=", 2.0, name="rate_target")
    problem.objective = power
    solution = solve(problem)
    assert solution.status == SOLUTION_OPTIMAL
    assert solution.objective_value == pytest.approx(3.0, rel=1e-4)
    assert solution.scalar_values["y[rate]"] >= 2.0 - 1e-6


def test_infeasible_problem_is_reported():
    problem = ConicProblem()
    power = problem.add_matrix_var("W", 2)
    problem.add_constraint(power, "<=", -1.0, name="negative_power")
    problem.objective = power
    assert solve(problem).status == SOLUTION_INFEASIBLE


def test_backend_with_no_installed_solver_reports_failure():
    problem = ConicProblem()
    problem.objective = problem.add_matrix_var("W", 1)
    solution = CvxpyBackend(solvers=["NOT_A_SOLVER"]).solve(problem)
    assert not solution.optimal
    assert "failures" in solution.solver_stats["diagnostics"]


def test_primal_residual_measures_relative_violation():
    problem = ConicProblem()
    power = problem.add_matrix_var("W", 1)
    problem.add_constraint(power, "<=", 1.0, name="cap")
    assert primal_residual(problem, {"W": np.array([[0.5]])}, {}) == 0.0
    assert primal_residual(problem, {"W": np.array([[2.0]])}, {}) == pytest.approx(0.5)


def test_dump_problem_writes_every_section(tmp_path):
    problem = ConicProblem()
    power = problem.add_matrix_var("W", 2)
    problem.add_scalar_var("s")
    problem.add_log_hypograph(power + 1.0, "rate")
    problem.add_constraint(power, "<=", 1.0, name="cap")
    encode_logdet(AffineMatrixMap({"W": np.ones((1, 1, 2, 2))}), 0.0, problem, name="crb", slack_id="s")
    problem.objective = power
    path = tmp_path / "problem.txt"
    dump_problem(problem, str(path))
    text = path.read_text()
    assert "var W hermitian 2 psd" in text
    assert "var s scalar" in text
    assert "var y[rate] aux" in text
    assert "constraint cap <= 1.0" in text
    assert "hypograph rate y[rate]" in text
    assert "logdet crb 1" in text and "slack s" in text
    assert "map crb W 0 0 0 0" in text


def test_project_psd_reports_the_clipped_eigenvalue():
    values = {"W": np.diag([2.0, -0.01]).astype(complex), "V": np.eye(2, dtype=complex), "free": -np.eye(2)}
    projected, violation = project_psd(values, {"W", "V"})
    assert violation == pytest.approx(0.01 / 2.0)
    np.testing.assert_allclose(projected["W"], np.diag([2.0, 0.0]), atol=1e-12)
    np.testing.assert_array_equal(projected["free"], -np.eye(2))
    assert project_psd({"V": np.eye(2)}, {"V"})[1] == 0.0


def test_solution_outside_the_psd_cone_is_not_accepted(monkeypatch):
    monkeypatch.setattr(conic_utils, "project_psd", lambda values, psd_ids: (values, 1e-2))
    problem = ConicProblem()
    power = problem.add_matrix_var("W", 2)
    problem.add_constraint(power, ">=", 1.0, name="unit_power")
    problem.objective = power
    solution = solve(problem)
    assert solution.status == SOLUTION_NUMERICAL_FAILURE
    assert not solution.optimal
    failures = solution.solver_stats["diagnostics"]["failures"]
    assert any("PSD cone" in reason for reason in failures.values())
