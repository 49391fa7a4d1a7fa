"""
Successive convex approximation building blocks.

Every expected rate is log2(A1(W)) − log2(A2(W)) with A1, A2 affine in the
covariance matrices (a TraceLogTerm each). Lower bounds on a rate keep log2(A1)
exact through an exponential-cone hypograph and replace log2(A2) with its
tangent; upper bounds (eavesdropper rates) do the opposite. The tangent of a
concave log is a global upper bound, so either surrogate is conservative and
tight at the expansion point.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from config.constants import DEFAULT_PENALTY_WEIGHT, INITIAL_POWER_SCALE, INITIAL_POWER_SPLIT
from utils.conic_utils import AffineFunctional, ConicProblem
from utils.errors import DegenerateExpansionPointError, InvalidInputError
from utils.geometry_utils import ArrayConfig, steering_vector
from utils.metrics_utils import COMMON_ID, EXTRA_ID, BeamformerSet, trace_product, private_id

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
# Eigenvalues within this relative distance of λ_max count as ties
EIGEN_TIE_TOL = 1e-9


@dataclass(frozen=True)
class StreamLayout:
    """Which covariance matrices a scheme optimises."""
    n_users: int
    common: bool = True
    extra: bool = True

    @property
    def private_ids(self) -> List[str]:
        return [private_id(k) for k in range(self.n_users)]

    @property
    def ids(self) -> List[str]:
        return ([COMMON_ID] if self.common else []) + self.private_ids + ([EXTRA_ID] if self.extra else [])


@dataclass
class TraceLogTerm:
    """A = Σ Re tr(C_id·W_id) + constant; the argument of a log2 in a rate."""
    coefficient_map: Dict[str, np.ndarray]
    constant: float = 0.0

    def __post_init__(self):
        if self.constant < 0:
            raise InvalidInputError(f"TraceLogTerm constant must be non-negative, got {self.constant}")

    def chi(self, matrices: Dict[str, np.ndarray]) -> float:
        return sum(trace_product(c, matrices[var_id]) for var_id, c in self.coefficient_map.items())

    def evaluate(self, matrices: Dict[str, np.ndarray]) -> float:
        return self.chi(matrices) + self.constant

    def as_functional(self) -> AffineFunctional:
        functional = AffineFunctional.const(self.constant)
        for var_id, coefficient in self.coefficient_map.items():
            functional = functional + AffineFunctional.trace(var_id, coefficient)
        return functional


@dataclass(frozen=True)
class RateTerms:
    """Rate = log2(numerator) − log2(denominator)."""
    numerator: TraceLogTerm
    denominator: TraceLogTerm

    def exact(self, matrices: Dict[str, np.ndarray]) -> float:
        return math.log2(self.numerator.evaluate(matrices)) - math.log2(self.denominator.evaluate(matrices))


@dataclass
class SCAState:
    expansion_point: BeamformerSet
    penalty_vectors: Dict[str, np.ndarray] = field(default_factory=dict)
    dinkelbach_factor: float = 0.0
    objective_trace: List[float] = field(default_factory=list)
    penalty_weight: float = DEFAULT_PENALTY_WEIGHT

    @property
    def iteration(self) -> int:
        return len(self.objective_trace)

    @property
    def matrices(self) -> Dict[str, np.ndarray]:
        return self.expansion_point.matrices()

    def advance(self, point: BeamformerSet, objective: float) -> None:
        """Move to a new expansion point and refresh every penalty vector there."""
        self.expansion_point = point
        self.objective_trace.append(float(objective))
        self.penalty_vectors = {
            var_id: refresh_penalty_vector(w)[0] for var_id, w in point.matrices().items()
        }


def _term(covariance: np.ndarray, ids: Sequence[str], noise: float) -> TraceLogTerm:
    return TraceLogTerm({var_id: covariance for var_id in ids}, float(noise))


def common_rate_terms(layout: StreamLayout, covariance: np.ndarray, noise: float) -> RateTerms:
    """Common stream at a user (or, with G_m, at an eavesdropper)."""
    if not layout.common:
        raise InvalidInputError("Layout has no common stream")
    others = layout.private_ids + ([EXTRA_ID] if layout.extra else [])
    return RateTerms(_term(covariance, [COMMON_ID] + others, noise), _term(covariance, others, noise))


def private_rate_terms(layout: StreamLayout, covariance: np.ndarray, noise: float, user_index: int) -> RateTerms:
    if not 0 <= user_index < layout.n_users:
        raise InvalidInputError(f"user_index {user_index} out of range")
    own = private_id(user_index)
    others = [i for i in layout.private_ids if i != own] + ([EXTRA_ID] if layout.extra else [])
    return RateTerms(_term(covariance, [own] + others, noise), _term(covariance, others, noise))


def eaves_common_rate_terms(layout: StreamLayout, covariance: np.ndarray, noise: float) -> RateTerms:
    return common_rate_terms(layout, covariance, noise)


def eaves_private_rate_terms(layout: StreamLayout, covariance: np.ndarray, noise: float,
                             user_index: int) -> RateTerms:
    """Eavesdropper on user k's private stream; W_c remains interference."""
    terms = private_rate_terms(layout, covariance, noise, user_index)
    if not layout.common:
        return terms
    extra = {COMMON_ID: covariance}
    return RateTerms(
        TraceLogTerm({**extra, **terms.numerator.coefficient_map}, terms.numerator.constant),
        TraceLogTerm({**extra, **terms.denominator.coefficient_map}, terms.denominator.constant),
    )


def linearize_upper(term: TraceLogTerm, state: SCAState) -> AffineFunctional:
    """
    Tangent of log2(A) at the expansion point.

    Returns the affine map W ↦ log2(A0) + (A(W) − A0)/(A0·ln 2) with A0 = A(W0), an upper
    bound of log2(A(W)) that is exact at the expansion point W0.

    Raises:
        DegenerateExpansionPointError: A0 <= 0
    """
    matrices = state.matrices
    value = term.evaluate(matrices)
    if not value > 0:
        raise DegenerateExpansionPointError(f"Log argument {value:.3e} is not positive at the expansion point")
    chi_j = term.chi(matrices)
    slope = 1.0 / (value * LN2)
    functional = AffineFunctional.const(math.log2(value) - chi_j * slope)
    for var_id, coefficient in term.coefficient_map.items():
        functional = functional + AffineFunctional.trace(var_id, coefficient * slope)
    return functional


def concave_log2(problem: ConicProblem, term: TraceLogTerm, name: str) -> AffineFunctional:
    """Auxiliary scalar y with y ≤ log2(A(W)), returned as a functional."""
    return problem.add_log_hypograph(term.as_functional(), name)


def rate_lower_bound(problem: ConicProblem, terms: RateTerms, state: SCAState, name: str) -> AffineFunctional:
    """log2(A1) − tangent(log2 A2): a concave under-estimator of the rate."""
    return concave_log2(problem, terms.numerator, name) - linearize_upper(terms.denominator, state)


def rate_upper_bound(problem: ConicProblem, terms: RateTerms, state: SCAState, name: str) -> AffineFunctional:
    """
    tangent(log2 A1) − log2(A2): a convex over-estimator of the rate.

    Only usable on the small side of a constraint, where the hypograph
    variable of log2(A2) is pushed up to its bound.
    """
    return linearize_upper(terms.numerator, state) - concave_log2(problem, terms.denominator, name)


def dinkelbach_update(min_metric: float, power: float) -> float:
    """λ = min_k metric / P."""
    if not power > 0:
        raise InvalidInputError(f"Dinkelbach update needs positive power, got {power}")
    return float(min_metric) / float(power)


def _normalize(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=complex).ravel()
    norm = np.linalg.norm(u)
    if norm == 0:
        raise InvalidInputError("Penalty vector is zero")
    if abs(norm - 1.0) > 1e-9:
        logger.warning(f"Penalty vector has norm {norm:.6g}, normalising")
        u = u / norm
    return u


def rank_one_penalty(W: np.ndarray, u_prev: np.ndarray, matrix_id: str = "W") -> Tuple[float, AffineFunctional]:
    """
    tr(W) − uᴴ·W·u and the same quantity as an affine functional of `matrix_id`.

    Args:
        W: Current Hermitian matrix
        u_prev: Leading eigenvector from the previous iterate
        matrix_id: Variable id the functional refers to

    Returns:
        (penalty value at W, functional Re tr((I − u·uᴴ)·W))
    """
    W = np.asarray(W, dtype=complex)
    u = _normalize(u_prev)
    if u.shape[0] != W.shape[0]:
        raise InvalidInputError(f"Penalty vector length {u.shape[0]} does not match matrix size {W.shape[0]}")
    coefficient = np.eye(W.shape[0]) - np.outer(u, u.conj())
    return trace_product(coefficient, W), AffineFunctional.trace(matrix_id, coefficient)


def _canonical_phase(v: np.ndarray) -> np.ndarray:
    nonzero = np.flatnonzero(np.abs(v) > 1e-12)
    if nonzero.size == 0:
        return v
    first = v[nonzero[0]]
    return v * (abs(first) / first)


def refresh_penalty_vector(W: np.ndarray) -> Tuple[np.ndarray, bool]:
    """
    Deterministic leading eigenvector of W.

    Among the eigenvectors of λ_max, the projection of e_1 (then e_2, ...) onto
    the top eigenspace is taken, so |first component| is maximal, and the
    phase is fixed so the first nonzero entry is real-positive.

    Returns:
        (unit vector, True if W is the zero matrix and e_1 was returned)
    """
    W = 0.5 * (np.asarray(W, dtype=complex) + np.asarray(W, dtype=complex).conj().T)
    n = W.shape[0]
    eigvals, eigvecs = np.linalg.eigh(W)
    top = eigvals[-1]
    if np.max(np.abs(eigvals)) == 0:
        logger.debug("Zero matrix has no leading direction, using e_1")
        basis = np.zeros(n, dtype=complex)
        basis[0] = 1.0
        return basis, True
    space = eigvecs[:, eigvals >= top - EIGEN_TIE_TOL * max(abs(top), 1e-300)]
    if space.shape[1] == 1:
        return _canonical_phase(space[:, 0]), False
    for index in range(n):
        projection = space @ space[index].conj()
        norm = np.linalg.norm(projection)
        if norm > 1e-12:
            return _canonical_phase(projection / norm), False
    return _canonical_phase(space[:, 0]), False


def extract_beamformer(W: np.ndarray) -> np.ndarray:
    """w = √λ_max·u_max with the canonical phase; zero for a zero/negative matrix."""
    u, degenerate = refresh_penalty_vector(W)
    top = float(np.linalg.eigvalsh(0.5 * (W + np.asarray(W).conj().T))[-1])
    if degenerate or top <= 0:
        return np.zeros(np.asarray(W).shape[0], dtype=complex)
    return np.sqrt(top) * u


def rank_one_residual(W: np.ndarray) -> float:
    """(tr W − λ_max)/tr W; zero for the zero matrix."""
    W = np.asarray(W, dtype=complex)
    trace = float(np.real(np.trace(W)))
    if trace <= 0:
        return 0.0
    return max(trace - float(np.linalg.eigvalsh(0.5 * (W + W.conj().T))[-1]), 0.0) / trace


def rank_one_projection(bf: BeamformerSet) -> BeamformerSet:
    """Replace every matrix by w·wᴴ of its extracted beamformer."""
    projected = {}
    for var_id, W in bf.matrices().items():
        w = extract_beamformer(W)
        projected[var_id] = np.outer(w, w.conj())
    return BeamformerSet.from_matrices(projected, bf.n_users, w_an=bf.w_an)


def converged(trace: Sequence[float], tau: float, j_max: int, relative: bool = False) -> bool:
    """
    |last − previous| ≤ τ, or the trace has reached j_max entries.

    With relative=True the step is measured against max(1, |previous|).
    """
    if len(trace) == 0:
        raise InvalidInputError("converged() needs a nonempty trace")
    if len(trace) >= j_max:
        return True
    if len(trace) < 2:
        return False
    return abs(trace[-1] - trace[-2]) <= tau * (max(1.0, abs(trace[-2])) if relative else 1.0)


def _leading_direction(matrix: np.ndarray) -> np.ndarray:
    return refresh_penalty_vector(matrix)[0]


def initial_point(layout: StreamLayout, user_covariances: Sequence[np.ndarray], p_max: float,
                  array: ArrayConfig, target_azimuth: float) -> BeamformerSet:
    """
    Matched-filter starting point.

    w_k follows the leading eigenvector of H_k, w_c that of Σ_k H_k and w_v
    the transmit steering vector of the first target. Power is split
    40/30/30 (private/common/extra) over the matrices present, scaled to
    0.9·P_max; private power is shared uniformly.
    """
    if len(user_covariances) != layout.n_users:
        raise InvalidInputError("One covariance per user is required")
    shares = {"private": INITIAL_POWER_SPLIT["private"]}
    if layout.common:
        shares["common"] = INITIAL_POWER_SPLIT["common"]
    if layout.extra:
        shares["extra"] = INITIAL_POWER_SPLIT["extra"]
    total_share = sum(shares.values())
    budget = INITIAL_POWER_SCALE * p_max

    def beam(direction: np.ndarray, power: float) -> np.ndarray:
        w = direction / np.linalg.norm(direction) * np.sqrt(power)
        return np.outer(w, w.conj())

    private_power = budget * shares["private"] / total_share / layout.n_users
    w_private = [beam(_leading_direction(H), private_power) for H in user_covariances]
    w_common = None
    if layout.common:
        w_common = beam(_leading_direction(sum(user_covariances)), budget * shares["common"] / total_share)
    w_extra = None
    if layout.extra:
        direction = steering_vector(target_azimuth, array.n_tx, array.spacing_ratio)
        w_extra = beam(direction, budget * shares["extra"] / total_share)
    return BeamformerSet(w_private=w_private, w_common=w_common, w_extra=w_extra)


__all__ = [
    'StreamLayout', 'TraceLogTerm', 'RateTerms', 'SCAState', 'common_rate_terms', 'private_rate_terms',
    'eaves_common_rate_terms', 'eaves_private_rate_terms', 'linearize_upper', 'concave_log2',
    'rate_lower_bound', 'rate_upper_bound', 'dinkelbach_update', 'rank_one_penalty', 'refresh_penalty_vector',
    'extract_beamformer', 'rank_one_residual', 'rank_one_projection', 'converged', 'initial_point',
]
