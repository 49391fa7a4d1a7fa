"""
Conic problems over Hermitian matrix variables and real scalars.

Problems are assembled in complex form (trace functionals, Hermitian
coefficient matrices) and only embedded into real symmetric variables when a
backend solves them. Relations are '<=', '>=' and '=='; the objective is
always minimised.

Plain-text dump format (dump_problem):

    var <id> hermitian <n> [psd]
    var <id> scalar | aux
    objective const <c>
    term <owner> matrix <var> <row> <col> <re> <im>
    term <owner> scalar <var> <coef>
    constraint <name> <relation> <bound> / const <c>
    hypograph <name> <aux>          aux <= log2(functional)
    logdet <name> <dim> <bound> <scale> [slack <id>]
    map <name> <var> <i> <j> <row> <col> <re> <im>

Coefficients are written in triplet form, zeros skipped.
"""
import logging
import math
from dataclasses import dataclass, field
from numbers import Number
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import cvxpy as cp
import numpy as np

from config.constants import HERMITIAN_TOL, PSD_RESIDUAL_TOL, SOLVER_RESIDUAL_TOL, SOLVER_VERBOSE
from config.status import SOLUTION_INFEASIBLE, SOLUTION_NUMERICAL_FAILURE, SOLUTION_OPTIMAL
from utils.errors import InvalidInputError, SolverFailureError
from utils.solver_utils import SolverAttemptError, retry_on_solver_error

logger = logging.getLogger(__name__)

RELATIONS = ("<=", ">=", "==")
LN2 = math.log(2.0)
# Residuals above this make the solution unusable and the next solver is tried
MAX_ACCEPTED_RESIDUAL = 1e-4
# Relative to the largest PSD trace; only smaller negative eigenvalues are clipped
MAX_ACCEPTED_PSD_VIOLATION = 1e-6


def _hermitize(matrix) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=complex)
    return 0.5 * (matrix + matrix.conj().T)


@dataclass
class AffineFunctional:
    """constant + Σ Re tr(C_id·W_id) + Σ a_id·s_id."""
    constant: float = 0.0
    matrix_terms: Dict[str, np.ndarray] = field(default_factory=dict)
    scalar_terms: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def trace(cls, var_id: str, coefficient) -> "AffineFunctional":
        return cls(matrix_terms={var_id: _hermitize(coefficient)})

    @classmethod
    def scalar(cls, var_id: str, coefficient: float = 1.0) -> "AffineFunctional":
        return cls(scalar_terms={var_id: float(coefficient)})

    @classmethod
    def const(cls, value: float) -> "AffineFunctional":
        return cls(constant=float(value))

    def _combine(self, other, sign: float) -> "AffineFunctional":
        if isinstance(other, Number):
            return AffineFunctional(self.constant + sign * float(other), dict(self.matrix_terms),
                                    dict(self.scalar_terms))
        if not isinstance(other, AffineFunctional):
            return NotImplemented
        matrix_terms = dict(self.matrix_terms)
        for var_id, coefficient in other.matrix_terms.items():
            matrix_terms[var_id] = matrix_terms.get(var_id, 0.0) + sign * coefficient
        scalar_terms = dict(self.scalar_terms)
        for var_id, coefficient in other.scalar_terms.items():
            scalar_terms[var_id] = scalar_terms.get(var_id, 0.0) + sign * coefficient
        return AffineFunctional(self.constant + sign * other.constant, matrix_terms, scalar_terms)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __radd__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return (-self)._combine(other, 1.0)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, factor):
        if not isinstance(factor, Number):
            return NotImplemented
        factor = float(factor)
        return AffineFunctional(
            self.constant * factor,
            {k: v * factor for k, v in self.matrix_terms.items()},
            {k: v * factor for k, v in self.scalar_terms.items()},
        )

    __rmul__ = __mul__

    def variables(self) -> Set[str]:
        return set(self.matrix_terms) | set(self.scalar_terms)

    def evaluate(self, matrix_values: Dict[str, np.ndarray],
                 scalar_values: Optional[Dict[str, float]] = None) -> float:
        scalar_values = scalar_values or {}
        value = self.constant
        for var_id, coefficient in self.matrix_terms.items():
            value += float(np.real(np.sum(coefficient * np.asarray(matrix_values[var_id]).T)))
        for var_id, coefficient in self.scalar_terms.items():
            value += coefficient * float(scalar_values[var_id])
        return float(value)


@dataclass
class AffineMatrixMap:
    """Real symmetric d×d valued map M(W)_ij = constant_ij + Σ Re tr(C_ij·W)."""
    coefficients: Dict[str, np.ndarray]
    constant: Optional[np.ndarray] = None

    def __post_init__(self):
        dims = {c.shape[0] for c in self.coefficients.values()}
        if len(dims) != 1:
            raise InvalidInputError("Matrix map needs at least one coefficient block and one output size")
        d = dims.pop()
        if self.constant is None:
            self.constant = np.zeros((d, d))

    @property
    def dim(self) -> int:
        return self.constant.shape[0]

    def scaled(self, factor: float) -> "AffineMatrixMap":
        return AffineMatrixMap({k: v * factor for k, v in self.coefficients.items()}, self.constant * factor)

    def evaluate(self, matrix_values: Dict[str, np.ndarray]) -> np.ndarray:
        out = np.array(self.constant, dtype=float)
        for var_id, coefficient in self.coefficients.items():
            out = out + np.real(np.einsum("ijab,ba->ij", coefficient, np.asarray(matrix_values[var_id])))
        return 0.5 * (out + out.T)


@dataclass
class AffineConstraint:
    functional: AffineFunctional
    relation: str
    bound: float
    name: str


@dataclass
class LogHypograph:
    """aux ≤ log2(functional), the concave half of an SCA rate surrogate."""
    aux_id: str
    functional: AffineFunctional
    name: str


@dataclass
class LogdetConstraint:
    """logdet(map(W)) + slack ≥ bound, with map and bound already rescaled by `scale`."""
    matrix_map: AffineMatrixMap
    bound: float
    scale: float
    name: str
    slack_id: Optional[str] = None


@dataclass
class ConicProblem:
    matrix_vars: Dict[str, int] = field(default_factory=dict)
    scalar_vars: List[str] = field(default_factory=list)
    aux_scalars: List[str] = field(default_factory=list)
    objective: AffineFunctional = field(default_factory=AffineFunctional)
    affine_constraints: List[AffineConstraint] = field(default_factory=list)
    psd_constraints: List[str] = field(default_factory=list)
    logdet_constraints: List[LogdetConstraint] = field(default_factory=list)
    log_hypographs: List[LogHypograph] = field(default_factory=list)

    def add_matrix_var(self, var_id: str, dim: int, psd: bool = True) -> AffineFunctional:
        if var_id in self.matrix_vars:
            raise InvalidInputError(f"Matrix variable {var_id} declared twice")
        self.matrix_vars[var_id] = int(dim)
        if psd:
            self.psd_constraints.append(var_id)
        return AffineFunctional.trace(var_id, np.eye(dim))

    def add_scalar_var(self, var_id: str, aux: bool = False) -> AffineFunctional:
        if var_id in self.scalar_vars or var_id in self.aux_scalars:
            raise InvalidInputError(f"Scalar variable {var_id} declared twice")
        (self.aux_scalars if aux else self.scalar_vars).append(var_id)
        return AffineFunctional.scalar(var_id)

    def add_constraint(self, functional: AffineFunctional, relation: str, bound: float = 0.0,
                       name: str = "") -> None:
        if relation not in RELATIONS:
            raise InvalidInputError(f"Unknown relation {relation}")
        name = name or f"c{len(self.affine_constraints)}"
        self.affine_constraints.append(AffineConstraint(functional, relation, float(bound), name))

    def add_log_hypograph(self, functional: AffineFunctional, name: str) -> AffineFunctional:
        """Declare aux ≤ log2(functional) and return aux as a functional."""
        aux_id = f"y[{name}]"
        aux = self.add_scalar_var(aux_id, aux=True)
        self.log_hypographs.append(LogHypograph(aux_id, functional, name))
        return aux

    def all_scalars(self) -> List[str]:
        return self.scalar_vars + self.aux_scalars

    def validate(self) -> None:
        """Every functional references only declared variables with matching sizes."""
        scalars = set(self.all_scalars())

        def check(functional: AffineFunctional, owner: str):
            for var_id, coefficient in functional.matrix_terms.items():
                if var_id not in self.matrix_vars:
                    raise InvalidInputError(f"{owner} references undeclared matrix {var_id}")
                n = self.matrix_vars[var_id]
                if coefficient.shape != (n, n):
                    raise InvalidInputError(f"{owner}: coefficient of {var_id} has shape {coefficient.shape}")
            for var_id in functional.scalar_terms:
                if var_id not in scalars:
                    raise InvalidInputError(f"{owner} references undeclared scalar {var_id}")

        check(self.objective, "objective")
        for constraint in self.affine_constraints:
            check(constraint.functional, constraint.name)
        for hypo in self.log_hypographs:
            check(hypo.functional, hypo.name)
        for logdet in self.logdet_constraints:
            for var_id, coefficient in logdet.matrix_map.coefficients.items():
                if var_id not in self.matrix_vars:
                    raise InvalidInputError(f"{logdet.name} references undeclared matrix {var_id}")
                n = self.matrix_vars[var_id]
                if coefficient.shape[2:] != (n, n):
                    raise InvalidInputError(f"{logdet.name}: map block of {var_id} has wrong size")
            if logdet.slack_id is not None and logdet.slack_id not in scalars:
                raise InvalidInputError(f"{logdet.name} references undeclared slack {logdet.slack_id}")

    def to_text(self) -> str:
        lines = ["# conic problem (minimize)"]
        for var_id, n in self.matrix_vars.items():
            lines.append(f"var {var_id} hermitian {n}" + (" psd" if var_id in self.psd_constraints else ""))
        lines.extend(f"var {s} scalar" for s in self.scalar_vars)
        lines.extend(f"var {s} aux" for s in self.aux_scalars)
        lines.append(f"objective const {self.objective.constant!r}")
        lines.extend(_functional_terms("objective", self.objective))
        for c in self.affine_constraints:
            lines.append(f"constraint {c.name} {c.relation} {c.bound!r} const {c.functional.constant!r}")
            lines.extend(_functional_terms(c.name, c.functional))
        for h in self.log_hypographs:
            lines.append(f"hypograph {h.name} {h.aux_id} const {h.functional.constant!r}")
            lines.extend(_functional_terms(h.name, h.functional))
        for ld in self.logdet_constraints:
            slack = f" slack {ld.slack_id}" if ld.slack_id else ""
            lines.append(f"logdet {ld.name} {ld.matrix_map.dim} {ld.bound!r} {ld.scale!r}{slack}")
            for var_id, coefficient in ld.matrix_map.coefficients.items():
                for i, j, a, b in zip(*np.nonzero(coefficient)):
                    value = complex(coefficient[i, j, a, b])
                    lines.append(f"map {ld.name} {var_id} {i} {j} {a} {b} {value.real!r} {value.imag!r}")
        return "\n".join(lines) + "\n"


def _functional_terms(owner: str, functional: AffineFunctional) -> Iterable[str]:
    for var_id, coefficient in functional.matrix_terms.items():
        for a, b in zip(*np.nonzero(coefficient)):
            value = complex(coefficient[a, b])
            yield f"term {owner} matrix {var_id} {a} {b} {value.real!r} {value.imag!r}"
    for var_id, coefficient in functional.scalar_terms.items():
        yield f"term {owner} scalar {var_id} {coefficient!r}"


def dump_problem(problem: ConicProblem, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(problem.to_text())
    logger.info(f"Problem dumped to {path}")


@dataclass
class Solution:
    status: str
    matrix_values: Dict[str, np.ndarray] = field(default_factory=dict)
    scalar_values: Dict[str, float] = field(default_factory=dict)
    objective_value: float = float("nan")
    solver_stats: Dict[str, object] = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == SOLUTION_OPTIMAL


def embed_complex(H) -> np.ndarray:
    """
    [[Re H, −Im H], [Im H, Re H]] of a Hermitian matrix.

    Raises:
        InvalidInputError: H is not Hermitian to within 1e-9
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise InvalidInputError(f"embed_complex needs a square matrix, got {H.shape}")
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    if np.max(np.abs(H - H.conj().T), initial=0.0) > HERMITIAN_TOL * scale:
        raise InvalidInputError("embed_complex needs a Hermitian matrix")
    H = 0.5 * (H + H.conj().T)
    return np.block([[H.real, -H.imag], [H.imag, H.real]])


def deembed_complex(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0] // 2
    W = 0.5 * (Y[:n, :n] + Y[n:, n:]) + 0.5j * (Y[n:, :n] - Y[:n, n:])
    return _hermitize(W)


def project_psd(matrix_values: Dict[str, np.ndarray],
                psd_ids: Iterable[str]) -> Tuple[Dict[str, np.ndarray], float]:
    """
    Clip the negative eigenvalues of the PSD variables.

    Returns:
        Projected values and the most negative clipped eigenvalue relative to
        the largest trace among the PSD variables
    """
    psd_ids = set(psd_ids)
    projected = dict(matrix_values)
    worst, largest_trace = 0.0, 0.0
    for var_id in psd_ids & set(matrix_values):
        eigvals, eigvecs = np.linalg.eigh(_hermitize(matrix_values[var_id]))
        worst = max(worst, float(-eigvals[0]))
        largest_trace = max(largest_trace, float(np.sum(np.maximum(eigvals, 0.0))))
        projected[var_id] = _hermitize((eigvecs * np.maximum(eigvals, 0.0)) @ eigvecs.conj().T)
    if worst <= 0:
        return projected, 0.0
    return projected, worst / largest_trace if largest_trace > 0 else math.inf


def logdet_scale(matrix_map: AffineMatrixMap, anchor: Optional[Dict[str, np.ndarray]] = None) -> float:
    """
    Factor s that gives map(anchor) unit mean diagonal.

    Falls back to 1/peak coefficient without an anchor or when map(anchor)
    has no positive trace.
    """
    peak = max((float(np.max(np.abs(c))) for c in matrix_map.coefficients.values()), default=0.0)
    if anchor is not None and peak > 0:
        trace = float(np.trace(matrix_map.evaluate(anchor)))
        if trace > 0 and math.isfinite(trace):
            return matrix_map.dim / trace
    return 1.0 / peak if peak > 0 else 1.0


def encode_logdet(matrix_map: AffineMatrixMap, bound: float, problem: ConicProblem,
                  name: str = "logdet", slack_id: Optional[str] = None,
                  reference: Optional[Dict[str, np.ndarray]] = None,
                  scale: Optional[float] = None) -> LogdetConstraint:
    """
    Add logdet(map(W)) ≥ bound to `problem`.

    The map is rescaled by s so its entries are O(1) (bound shifts by d·ln s).
    The backend realises it with a lower-triangular certificate Z:
    [[M, Z], [Zᵀ, diag(Z)]] ⪰ 0 and Σ ln Z_ii ≥ bound.

    Args:
        matrix_map: Symmetric-valued affine map
        bound: Lower bound on logdet
        problem: Problem to extend
        name: Constraint name
        slack_id: Optional scalar added to the left-hand side (feasibility restoration)
        reference: Anchor for logdet_scale when no explicit scale is given
        scale: Fixed s; iterative callers pass the same value every iteration
    """
    d = matrix_map.dim
    if scale is None:
        scale = logdet_scale(matrix_map, reference)
    elif not (scale > 0 and math.isfinite(scale)):
        raise InvalidInputError(f"logdet scale must be positive and finite, got {scale}")
    constraint = LogdetConstraint(
        matrix_map=matrix_map.scaled(scale),
        bound=float(bound) + d * math.log(scale),
        scale=scale,
        name=name,
        slack_id=slack_id,
    )
    problem.logdet_constraints.append(constraint)
    return constraint


class CvxpyBackend:
    """
    Solver backend built on cvxpy.

    Hermitian variables become real symmetric 2n×2n variables constrained to
    the embedding structure; concave log terms use cvxpy's exponential cone.
    """

    def __init__(self, solvers: Optional[Sequence[str]] = None, verbose: Optional[bool] = None,
                 **solver_options):
        self.solvers = list(solvers) if solvers else None
        self.verbose = SOLVER_VERBOSE if verbose is None else verbose
        self.solver_options = solver_options

    def solve(self, problem: ConicProblem) -> Solution:
        problem.validate()
        try:
            return self._solve_with_chain(problem, solvers=self.solvers)
        except SolverFailureError as e:
            logger.error(f"Conic solve failed: {e}")
            return Solution(status=SOLUTION_NUMERICAL_FAILURE, solver_stats={"diagnostics": e.diagnostics})

    @retry_on_solver_error()
    def _solve_with_chain(self, problem: ConicProblem, solver: str) -> Solution:
        model, embedded, scalars = self._build(problem)
        model.solve(solver=solver, verbose=self.verbose, **self.solver_options.get(solver, {}))
        status = model.status
        stats = {"solver": solver, "cvxpy_status": status}
        if model.solver_stats is not None:
            stats["iterations"] = model.solver_stats.num_iters
            stats["solve_time"] = model.solver_stats.solve_time
        if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            logger.info(f"{solver} reports the problem infeasible")
            return Solution(status=SOLUTION_INFEASIBLE, solver_stats=stats)
        if status == cp.USER_LIMIT:
            raise SolverAttemptError(f"{solver} hit its iteration limit")
        if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            raise SolverAttemptError(f"{solver} returned status {status}")

        raw_values = {}
        for var_id, Y in embedded.items():
            if Y.value is None:
                raise SolverAttemptError(f"{solver} returned no value for {var_id}")
            raw_values[var_id] = deembed_complex(Y.value)
        matrix_values, psd_violation = project_psd(raw_values, problem.psd_constraints)
        if psd_violation > MAX_ACCEPTED_PSD_VIOLATION:
            raise SolverAttemptError(f"{solver} solution leaves the PSD cone by {psd_violation:.2e}")
        scalar_values = {var_id: float(v.value) for var_id, v in scalars.items()}

        residual = primal_residual(problem, matrix_values, scalar_values)
        stats.update({"primal_residual": residual, "psd_violation": psd_violation})
        if residual > MAX_ACCEPTED_RESIDUAL:
            raise SolverAttemptError(f"{solver} solution violates constraints by {residual:.2e}")
        if residual > SOLVER_RESIDUAL_TOL or psd_violation > PSD_RESIDUAL_TOL:
            stats["inaccurate"] = True
            logger.warning(f"{solver} solution residual {residual:.2e}, PSD violation {psd_violation:.2e}")
        return Solution(
            status=SOLUTION_OPTIMAL,
            matrix_values=matrix_values,
            scalar_values=scalar_values,
            objective_value=problem.objective.evaluate(matrix_values, scalar_values),
            solver_stats=stats,
        )

    @staticmethod
    def _build(problem: ConicProblem):
        constraints = []
        embedded = {}
        for var_id, n in problem.matrix_vars.items():
            Y = cp.Variable((2 * n, 2 * n), symmetric=True, name=var_id)
            constraints += [Y[:n, :n] == Y[n:, n:], Y[:n, n:] == -Y[n:, :n]]
            if var_id in problem.psd_constraints:
                constraints.append(Y >> 0)
            embedded[var_id] = Y
        scalars = {var_id: cp.Variable(name=var_id) for var_id in problem.all_scalars()}

        def expression(functional: AffineFunctional):
            expr = functional.constant
            for var_id, coefficient in functional.matrix_terms.items():
                expr = expr + 0.5 * cp.sum(cp.multiply(embed_complex(coefficient), embedded[var_id]))
            for var_id, coefficient in functional.scalar_terms.items():
                expr = expr + coefficient * scalars[var_id]
            return expr

        for c in problem.affine_constraints:
            lhs = expression(c.functional)
            if c.relation == "<=":
                constraints.append(lhs <= c.bound)
            elif c.relation == ">=":
                constraints.append(lhs >= c.bound)
            else:
                constraints.append(lhs == c.bound)

        for h in problem.log_hypographs:
            constraints.append(cp.log(expression(h.functional)) >= LN2 * scalars[h.aux_id])

        for ld in problem.logdet_constraints:
            d = ld.matrix_map.dim
            flat = ld.matrix_map.constant.ravel()
            for var_id, coefficient in ld.matrix_map.coefficients.items():
                n = problem.matrix_vars[var_id]
                rows = np.stack([
                    embed_complex(coefficient[i, j]).ravel(order="F") for i in range(d) for j in range(d)
                ]).reshape(d * d, 4 * n * n)
                flat = flat + 0.5 * (rows @ cp.vec(embedded[var_id]))
            M = cp.reshape(flat, (d, d), order="C")
            M = 0.5 * (M + M.T)
            Z = cp.Variable((d, d), name=f"Z[{ld.name}]")
            if d > 1:
                constraints.append(cp.upper_tri(Z) == 0)
            block = cp.bmat([[M, Z], [Z.T, cp.diag(cp.diag(Z))]])
            constraints.append(0.5 * (block + block.T) >> 0)
            lhs = cp.sum(cp.log(cp.diag(Z)))
            if ld.slack_id is not None:
                lhs = lhs + scalars[ld.slack_id]
            constraints.append(lhs >= ld.bound)

        model = cp.Problem(cp.Minimize(expression(problem.objective)), constraints)
        return model, embedded, scalars


def primal_residual(problem: ConicProblem, matrix_values: Dict[str, np.ndarray],
                    scalar_values: Dict[str, float]) -> float:
    """Largest relative violation of the affine, hypograph and logdet constraints."""
    worst = 0.0
    for c in problem.affine_constraints:
        value = c.functional.evaluate(matrix_values, scalar_values)
        gap = {"<=": value - c.bound, ">=": c.bound - value, "==": abs(value - c.bound)}[c.relation]
        worst = max(worst, gap / (1.0 + abs(c.bound)))
    for h in problem.log_hypographs:
        inner = h.functional.evaluate(matrix_values, scalar_values)
        aux = scalar_values[h.aux_id]
        if inner <= 0:
            return float("inf")
        worst = max(worst, (aux - math.log2(inner)) / (1.0 + abs(aux)))
    for ld in problem.logdet_constraints:
        sign, value = np.linalg.slogdet(ld.matrix_map.evaluate(matrix_values))
        if sign <= 0:
            return float("inf")
        slack = scalar_values[ld.slack_id] if ld.slack_id else 0.0
        worst = max(worst, (ld.bound - value - slack) / (1.0 + abs(ld.bound)))
    return float(worst)


def solve(problem: ConicProblem, backend: Optional[CvxpyBackend] = None) -> Solution:
    """Solve with `backend` (a default CvxpyBackend when omitted)."""
    return (backend or CvxpyBackend()).solve(problem)


__all__ = [
    'AffineFunctional', 'AffineMatrixMap', 'AffineConstraint', 'LogHypograph', 'LogdetConstraint',
    'ConicProblem', 'Solution', 'embed_complex', 'deembed_complex', 'project_psd', 'logdet_scale', 'encode_logdet',
    'CvxpyBackend', 'primal_residual', 'solve', 'dump_problem',
]
