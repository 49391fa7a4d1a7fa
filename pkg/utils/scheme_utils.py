"""
Per-iteration convex subproblems and the three iterative algorithms.

alg1 maximises the minimum rate-to-power ratio, alg2 the minimum secrecy
rate-to-power ratio (both through Dinkelbach's parametric form), alg3
minimises the power needed for communication and sensing and spends the rest
of P_max on isotropic artificial noise.

Channels are normalised per receiver (H/‖H‖_F, σ²/‖H‖_F) before assembly.
SINRs are invariant to that, the variables stay in watts and the solver sees
O(1) coefficients.

Per-iteration size: an RSMA scheme with a sensing sequence has K+2 Hermitian
N_t×N_t LMIs (W_c, W_1..W_K, W_v); Ben1 and SDMA have K+1. The CRB adds one
(6T)×(6T) LMI from the logdet certificate. Scalar constraints grow as O(KM).

The max-min objective min_k(c_k + R_p,k) − λP ≥ t is written as K epigraph
constraints, one per user, which is the same feasible set.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from config.constants import (DEFAULT_J_MAX, DEFAULT_PENALTY_WEIGHT, DEFAULT_TAU, FEASIBILITY_TOL, INNER_J_MAX,
                              PENALTY_POWER_FLOOR, PENALTY_RAMP_CAP, PENALTY_RAMP_FACTOR, RESTORATION_SLACK_TOL,
                              SECURITY_EPSILON)
from config.status import (SOLUTION_INFEASIBLE, STATUS_CONVERGED, STATUS_INFEASIBLE, STATUS_ITERATION_LIMIT,
                           STATUS_NUMERICAL_FAILURE)
from utils.conic_utils import (AffineFunctional, AffineMatrixMap, ConicProblem, CvxpyBackend, Solution, encode_logdet,
                               logdet_scale)
from utils.errors import (DegenerateExpansionPointError, IllConditionedError, InfeasibleScenarioError,
                          InvalidInputError, OverBudgetError, SolverFailureError)
from utils.fim_utils import (SCHEMES, SchemeSelector, SensingGeometry, crb_determinant, fim_coefficients,
                             fisher_information, get_scheme, logdet_floor, sensing_covariance)
from utils.geometry_utils import ArrayConfig
from utils.metrics_utils import (EXTRA_ID, BeamformerSet, ChannelSet, MetricsReport, RateAllocation, common_rate_budget,
                                 common_secrecy_budget, eaves_rates, evaluate, fit_allocation)
from utils.sca_utils import (RateTerms, SCAState, StreamLayout, common_rate_terms, converged, dinkelbach_update,
                             eaves_common_rate_terms, eaves_private_rate_terms, initial_point, private_rate_terms,
                             rank_one_penalty, rank_one_projection, rank_one_residual, rate_lower_bound,
                             rate_upper_bound, refresh_penalty_vector)

logger = logging.getLogger(__name__)

ALGORITHMS = ("alg1", "alg2", "alg3")
SLACK_ID = "s"


@dataclass(frozen=True)
class AlgorithmConfig:
    p_max: float
    qos_threshold: float
    secrecy_threshold: float
    crb_threshold: float
    penalty_weight: float = DEFAULT_PENALTY_WEIGHT
    tau: float = DEFAULT_TAU
    j_max: int = DEFAULT_J_MAX
    selector: SchemeSelector = SCHEMES["scheme1"]
    penalty_ramp: bool = False
    security_epsilon: float = SECURITY_EPSILON

    def __post_init__(self):
        for name in ("p_max", "qos_threshold", "secrecy_threshold", "crb_threshold", "tau"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive, got {getattr(self, name)}")
        if int(self.j_max) < 1:
            raise InvalidInputError(f"j_max must be >= 1, got {self.j_max}")
        if self.penalty_weight < 0:
            raise InvalidInputError(f"penalty_weight must be non-negative, got {self.penalty_weight}")
        if self.security_epsilon < 0:
            raise InvalidInputError("security_epsilon must be non-negative")


@dataclass
class RunResult:
    algorithm: str
    scheme: str
    status: str
    beamformers: Optional[BeamformerSet] = None
    allocation: Optional[RateAllocation] = None
    metrics: Optional[MetricsReport] = None
    relaxed_beamformers: Optional[BeamformerSet] = None
    relaxed_metrics: Optional[MetricsReport] = None
    objective_trace: List[float] = field(default_factory=list)
    dinkelbach_trace: List[float] = field(default_factory=list)
    penalty_trace: List[float] = field(default_factory=list)
    feasibility_report: Dict[str, float] = field(default_factory=dict)
    rank_one_residuals: Dict[str, float] = field(default_factory=dict)
    crb_det: float = float("nan")
    an_eaves_rates: Optional[Dict[str, object]] = None
    message: str = ""
    failed_constraint: Optional[str] = None

    @property
    def iterations(self) -> int:
        return len(self.objective_trace)

    @property
    def objective(self) -> float:
        """Exact final objective: min URPR (alg1), min USRPR (alg2) or power (alg3)."""
        if self.metrics is None:
            return float("nan")
        return objective_value(self.algorithm, self.metrics)

    def to_dict(self) -> Dict[str, object]:
        return {
            "algorithm": self.algorithm,
            "scheme": self.scheme,
            "status": self.status,
            "objective": self.objective,
            "iterations": self.iterations,
            "crb_det": self.crb_det,
            "objective_trace": list(self.objective_trace),
            "dinkelbach_trace": list(self.dinkelbach_trace),
            "penalty_trace": list(self.penalty_trace),
            "feasibility_report": dict(self.feasibility_report),
            "rank_one_residuals": dict(self.rank_one_residuals),
            "allocation": None if self.allocation is None else {
                "common_parts": list(self.allocation.common_parts),
                "secrecy_common_parts": None if self.allocation.secrecy_common_parts is None
                else list(self.allocation.secrecy_common_parts),
            },
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
            "an_eaves_rates": self.an_eaves_rates,
            "message": self.message,
            "failed_constraint": self.failed_constraint,
        }


@dataclass
class ProblemData:
    """Everything the assemblers need that does not change between iterations."""
    layout: StreamLayout
    selector: SchemeSelector
    channels: ChannelSet
    user_covariances: List[np.ndarray]
    user_noise: List[float]
    eaves_covariances: List[np.ndarray]
    eaves_noise: List[float]
    fim_map: Optional[AffineMatrixMap]
    logdet_bound: float
    array: ArrayConfig
    sensing: SensingGeometry
    logdet_scale: float = 1.0

    @property
    def n_users(self) -> int:
        return self.layout.n_users

    @property
    def n_eaves(self) -> int:
        return len(self.eaves_covariances)

    @property
    def idle_ids(self) -> List[str]:
        """Layout matrices that neither sense nor carry data; they are pinned to zero."""
        if self.layout.extra and EXTRA_ID not in self.selector.weights():
            return [EXTRA_ID]
        return []

    def without_idle(self, point: BeamformerSet) -> BeamformerSet:
        if EXTRA_ID in self.idle_ids and point.w_extra is not None:
            return replace(point, w_extra=np.zeros_like(point.w_extra))
        return point


def layout_for(selector: SchemeSelector, n_users: int) -> StreamLayout:
    return StreamLayout(n_users=n_users, common=selector.rsma, extra=selector.extra_signal_present)


@lru_cache(maxsize=16)
def _cached_fim_coefficients(sensing: SensingGeometry, array: ArrayConfig) -> np.ndarray:
    return fim_coefficients(sensing, array)


def _normalized(covariance: np.ndarray, noise: float) -> Tuple[np.ndarray, float]:
    norm = float(np.linalg.norm(covariance))
    if norm <= 0:
        return covariance, noise
    return covariance / norm, noise / norm


def build_problem_data(scenario, selector: SchemeSelector, crb_threshold: float,
                       p_max: float = 1.0) -> ProblemData:
    """
    Normalised channels and the FIM map for one scheme of a scenario.

    The logdet scale is fixed here for the whole run: the FIM map evaluated
    with every sensing matrix at p_max/N_t · I gets unit mean diagonal.

    `scenario` needs users, eavesdroppers, sensing, array, user_noise_power
    and eaves_noise_power (config.scenario_config.ScenarioConfig).
    """
    channels = ChannelSet.from_geometry(scenario.users, scenario.eavesdroppers, scenario.array,
                                        scenario.user_noise_power, scenario.eaves_noise_power)
    users = [_normalized(h.covariance, s) for h, s in zip(channels.users, channels.user_noise)]
    eaves = [_normalized(g.covariance, s) for g, s in zip(channels.eavesdroppers, channels.eaves_noise)]

    fim_map = None
    bound = -math.inf
    scale = 1.0
    if math.isfinite(crb_threshold):
        coefficients = _cached_fim_coefficients(scenario.sensing, scenario.array)
        fim_map = AffineMatrixMap({var_id: weight * coefficients for var_id, weight in selector.weights().items()})
        bound = logdet_floor(crb_threshold)
        anchor = np.eye(scenario.array.n_tx) * (p_max / scenario.array.n_tx)
        scale = logdet_scale(fim_map, {var_id: anchor for var_id in fim_map.coefficients})

    return ProblemData(
        layout=layout_for(selector, len(scenario.users)),
        selector=selector,
        channels=channels,
        user_covariances=[h for h, _ in users],
        user_noise=[s for _, s in users],
        eaves_covariances=[g for g, _ in eaves],
        eaves_noise=[s for _, s in eaves],
        fim_map=fim_map,
        logdet_bound=bound,
        array=scenario.array,
        sensing=scenario.sensing,
        logdet_scale=scale,
    )


class SurrogateBuilder:
    """
    Collects the convex surrogate of one iteration.

    With `restoration=True` every rate and CRB constraint is relaxed by a
    common slack s ≥ 0 and the caller minimises s instead of the objective.
    """

    def __init__(self, data: ProblemData, state: SCAState, restoration: bool = False):
        self.data = data
        self.state = state
        self.problem = ConicProblem()
        self._cache: Dict[str, AffineFunctional] = {}
        for var_id in data.layout.ids:
            self.problem.add_matrix_var(var_id, data.array.n_tx)
        for var_id in data.idle_ids:
            self.problem.add_constraint(AffineFunctional.trace(var_id, np.eye(data.array.n_tx)), "==", 0.0,
                                        f"idle[{var_id}]")
        self.slack = None
        if restoration:
            self.slack = self.problem.add_scalar_var(SLACK_ID)
            self.problem.add_constraint(self.slack, ">=", 0.0, "slack_nonnegative")

    def _cached(self, key: str, build: Callable[[], AffineFunctional]) -> AffineFunctional:
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def _lower(self, terms: RateTerms, key: str) -> AffineFunctional:
        return self._cached(key, lambda: rate_lower_bound(self.problem, terms, self.state, key))

    def _upper(self, terms: RateTerms, key: str) -> AffineFunctional:
        return self._cached(key, lambda: rate_upper_bound(self.problem, terms, self.state, key))

    def common_rate(self, k: int) -> AffineFunctional:
        d = self.data
        return self._lower(common_rate_terms(d.layout, d.user_covariances[k], d.user_noise[k]), f"Rc[k={k}]")

    def private_rate(self, k: int) -> AffineFunctional:
        d = self.data
        return self._lower(private_rate_terms(d.layout, d.user_covariances[k], d.user_noise[k], k), f"Rp[k={k}]")

    def eaves_common_rate(self, m: int) -> AffineFunctional:
        d = self.data
        return self._upper(eaves_common_rate_terms(d.layout, d.eaves_covariances[m], d.eaves_noise[m]),
                           f"REc[m={m}]")

    def eaves_private_rate(self, k: int, m: int) -> AffineFunctional:
        d = self.data
        terms = eaves_private_rate_terms(d.layout, d.eaves_covariances[m], d.eaves_noise[m], k)
        return self._upper(terms, f"REp[k={k},m={m}]")

    def power(self) -> AffineFunctional:
        total = AffineFunctional()
        for var_id in self.data.layout.ids:
            total = total + AffineFunctional.trace(var_id, np.eye(self.data.array.n_tx))
        return total

    def per_unit(self, functional: AffineFunctional) -> AffineFunctional:
        """`functional` divided by the expansion-point power."""
        return (1.0 / max(self.state.expansion_point.total_power, PENALTY_POWER_FLOOR)) * functional

    def penalty(self) -> AffineFunctional:
        """Rank-1 penalty in units of the expansion-point power."""
        total = AffineFunctional()
        matrices = self.state.matrices
        for var_id in self.data.layout.ids:
            if var_id in self.data.idle_ids:
                continue
            u = self.state.penalty_vectors.get(var_id)
            if u is None:
                u = refresh_penalty_vector(matrices[var_id])[0]
            total = total + rank_one_penalty(matrices[var_id], u, var_id)[1]
        return self.per_unit(total)

    def require(self, functional: AffineFunctional, bound: float, name: str) -> None:
        """functional ≥ bound, relaxed by the slack during restoration."""
        if self.slack is not None:
            functional = functional + self.slack
        self.problem.add_constraint(functional, ">=", bound, name)

    def hard(self, functional: AffineFunctional, relation: str, bound: float, name: str) -> None:
        self.problem.add_constraint(functional, relation, bound, name)

    def add_crb(self) -> None:
        if self.data.fim_map is None:
            return
        encode_logdet(self.data.fim_map, self.data.logdet_bound, self.problem, name="crb",
                      slack_id=SLACK_ID if self.slack is not None else None, scale=self.data.logdet_scale)

    def finish(self, objective: AffineFunctional) -> ConicProblem:
        self.problem.objective = self.slack if self.slack is not None else objective
        self.problem.validate()
        return self.problem


def _eaves_pairs(data: ProblemData):
    return [(k, m) for k in range(data.n_users) for m in range(data.n_eaves)]


def _data_for(cfg: AlgorithmConfig, scenario, data: Optional[ProblemData]) -> ProblemData:
    return data if data is not None else build_problem_data(scenario, cfg.selector, cfg.crb_threshold, cfg.p_max)


def assemble_p13(state: SCAState, cfg: AlgorithmConfig, scenario, data: Optional[ProblemData] = None,
                 restoration: bool = False) -> ConicProblem:
    """
    Max-min rate-to-power surrogate (alg1) at the expansion point of `state`.

    Variables: the layout's Hermitian matrices, c_1..c_K (RSMA) and t.
    """
    data = _data_for(cfg, scenario, data)
    b = SurrogateBuilder(data, state, restoration)
    K = data.n_users
    power = b.power()
    rsma = data.layout.common

    shares = []
    if rsma:
        shares = [b.problem.add_scalar_var(f"c_{k + 1}") for k in range(K)]
        for k, c in enumerate(shares):
            b.hard(c, ">=", 0.0, f"share_nonnegative[k={k}]")
        total_share = sum(shares, AffineFunctional())
        for k in range(K):
            b.require(b.common_rate(k) - total_share, 0.0, f"common_split[k={k}]")
        for k, m in _eaves_pairs(data):
            b.require(b.common_rate(k) - b.eaves_common_rate(m), cfg.security_epsilon,
                      f"common_security[k={k},m={m}]")

    user_rate = [(shares[k] if rsma else AffineFunctional()) + b.private_rate(k) for k in range(K)]
    for k, m in _eaves_pairs(data):
        b.require(b.private_rate(k) - b.eaves_private_rate(k, m), cfg.secrecy_threshold, f"secrecy[k={k},m={m}]")
    for k in range(K):
        b.require(user_rate[k], cfg.qos_threshold, f"qos[k={k}]")
    b.add_crb()
    b.hard(power, "<=", cfg.p_max, "power")

    objective = AffineFunctional()
    if not restoration:
        t = b.problem.add_scalar_var("t")
        for k in range(K):
            b.hard(user_rate[k] - state.dinkelbach_factor * power - t, ">=", 0.0, f"epigraph[k={k}]")
        objective = -t + state.penalty_weight * b.penalty()
    return b.finish(objective)


def assemble_p21(state: SCAState, cfg: AlgorithmConfig, scenario, data: Optional[ProblemData] = None,
                 restoration: bool = False) -> ConicProblem:
    """
    Max-min secrecy-rate-to-power surrogate (alg2).

    Variables: the layout's Hermitian matrices, csec_1..csec_K (RSMA) and t.
    """
    data = _data_for(cfg, scenario, data)
    b = SurrogateBuilder(data, state, restoration)
    K, M = data.n_users, data.n_eaves
    power = b.power()
    rsma = data.layout.common

    shares = []
    if rsma:
        shares = [b.problem.add_scalar_var(f"csec_{k + 1}") for k in range(K)]
        for k, c in enumerate(shares):
            b.hard(c, ">=", 0.0, f"share_nonnegative[k={k}]")
        total_share = sum(shares, AffineFunctional())
        for k in range(K):
            if M == 0:
                b.require(b.common_rate(k) - total_share, 0.0, f"common_secrecy_split[k={k}]")
            for m in range(M):
                b.require(b.common_rate(k) - b.eaves_common_rate(m) - total_share, 0.0,
                          f"common_secrecy_split[k={k},m={m}]")

    secrecy_bounds: List[Tuple[int, str, AffineFunctional]] = []
    for k in range(K):
        share = shares[k] if rsma else AffineFunctional()
        if M == 0:
            secrecy_bounds.append((k, f"k={k}", share + b.private_rate(k)))
        for m in range(M):
            leak_free = b.private_rate(k) - b.eaves_private_rate(k, m)
            if rsma:
                b.require(leak_free, 0.0, f"private_secrecy[k={k},m={m}]")
            secrecy_bounds.append((k, f"k={k},m={m}", share + leak_free))
    for _, label, lower in secrecy_bounds:
        b.require(lower, cfg.secrecy_threshold, f"secrecy[{label}]")
    b.add_crb()
    b.hard(power, "<=", cfg.p_max, "power")

    objective = AffineFunctional()
    if not restoration:
        t = b.problem.add_scalar_var("t")
        for _, label, lower in secrecy_bounds:
            b.hard(lower - state.dinkelbach_factor * power - t, ">=", 0.0, f"epigraph[{label}]")
        objective = -t + state.penalty_weight * b.penalty()
    return b.finish(objective)


def assemble_p31(state: SCAState, cfg: AlgorithmConfig, scenario, data: Optional[ProblemData] = None,
                 restoration: bool = False) -> ConicProblem:
    """Minimum-power surrogate (alg3); no eavesdropper constraints and no power cap."""
    data = _data_for(cfg, scenario, data)
    b = SurrogateBuilder(data, state, restoration)
    K = data.n_users
    rsma = data.layout.common

    shares = []
    if rsma:
        shares = [b.problem.add_scalar_var(f"c_{k + 1}") for k in range(K)]
        for k, c in enumerate(shares):
            b.hard(c, ">=", 0.0, f"share_nonnegative[k={k}]")
        total_share = sum(shares, AffineFunctional())
        for k in range(K):
            b.require(b.common_rate(k) - total_share, 0.0, f"common_split[k={k}]")
    for k in range(K):
        share = shares[k] if rsma else AffineFunctional()
        b.require(share + b.private_rate(k), cfg.qos_threshold, f"qos[k={k}]")
    b.add_crb()
    return b.finish(b.per_unit(b.power()) + state.penalty_weight * b.penalty())


SDMA_VARIANTS = {"p1": assemble_p13, "p2": assemble_p21, "p3": assemble_p31}


def assemble_sdma(variant: str, state: SCAState, cfg: AlgorithmConfig, scenario,
                  data: Optional[ProblemData] = None, restoration: bool = False) -> ConicProblem:
    """SDMA counterpart of P1/P2/P3: K private beams plus W_v, sensing with R = W_v."""
    if variant not in SDMA_VARIANTS:
        raise InvalidInputError(f"Unknown SDMA variant '{variant}', expected one of {sorted(SDMA_VARIANTS)}")
    cfg = replace(cfg, selector=SCHEMES["sdma"])
    if data is not None and data.layout.common:
        raise InvalidInputError("SDMA assembly needs problem data built for the sdma selector")
    return SDMA_VARIANTS[variant](state, cfg, scenario, data=data, restoration=restoration)


ASSEMBLERS = {"alg1": assemble_p13, "alg2": assemble_p21, "alg3": assemble_p31}


def lmi_census(problem: ConicProblem) -> Dict[str, int]:
    """Count the LMIs and scalar constraints of an assembled problem."""
    sizes = {problem.matrix_vars[v] for v in problem.psd_constraints}
    return {
        "matrix_lmis": len(problem.psd_constraints),
        "matrix_lmi_size": sizes.pop() if len(sizes) == 1 else 0,
        "logdet_lmis": len(problem.logdet_constraints),
        "scalar_constraints": len(problem.affine_constraints) + len(problem.log_hypographs),
    }


def allocate_an(p_max: float, used_power: float, n_tx: int,
                rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Isotropic artificial-noise covariance (P_max − P)/N_t · I.

    `rng` is never drawn from: the covariance is the same for every generator.

    Raises:
        OverBudgetError: used_power exceeds p_max by more than 1e-9
    """
    if int(n_tx) < 1:
        raise InvalidInputError(f"n_tx must be >= 1, got {n_tx}")
    if used_power > p_max + 1e-9:
        raise OverBudgetError(f"Necessary power {used_power:.6g} W exceeds P_max {p_max:.6g} W")
    residual = max(p_max - used_power, 0.0)
    return np.eye(int(n_tx), dtype=complex) * (residual / int(n_tx))


def objective_value(algorithm: str, metrics: MetricsReport) -> float:
    if algorithm == "alg1":
        return float(np.min(metrics.urpr))
    if algorithm == "alg2":
        return float(np.min(metrics.usrpr))
    return float(metrics.total_power)


def _dinkelbach_metric(algorithm: str, metrics: MetricsReport) -> float:
    return metrics.min_secrecy_rate if algorithm == "alg2" else metrics.min_rate


def _allocation(algorithm: str, solution: Solution, layout: StreamLayout) -> RateAllocation:
    K = layout.n_users
    if not layout.common:
        return RateAllocation.zeros(K, secrecy=algorithm == "alg2")
    if algorithm == "alg2":
        shares = tuple(max(solution.scalar_values[f"csec_{k + 1}"], 0.0) for k in range(K))
        return RateAllocation(shares, shares)
    return RateAllocation(tuple(max(solution.scalar_values[f"c_{k + 1}"], 0.0) for k in range(K)))


def _fitted_metrics(bf: BeamformerSet, alloc: RateAllocation,
                    channels: ChannelSet) -> Tuple[RateAllocation, MetricsReport]:
    """Evaluate twice: first to learn the exact budgets, then with shares fitted to them."""
    probe = evaluate(bf, RateAllocation.zeros(bf.n_users, alloc.secrecy_common_parts is not None), channels)
    secrecy_budget = common_secrecy_budget(probe) if alloc.secrecy_common_parts is not None else None
    budget = common_rate_budget(probe) if bf.w_common is not None else 0.0
    if secrecy_budget is not None:
        budget = min(budget, secrecy_budget)
    fitted = fit_allocation(alloc, budget, secrecy_budget)
    return fitted, evaluate(bf, fitted, channels)


def _penalty_total(bf: BeamformerSet, vectors: Dict[str, np.ndarray]) -> float:
    total = 0.0
    for var_id, W in bf.matrices().items():
        u = vectors.get(var_id)
        if u is None:
            u = refresh_penalty_vector(W)[0]
        total += rank_one_penalty(W, u, var_id)[0]
    return total


def _worst_soft_constraint(problem: ConicProblem, solution: Solution) -> Optional[str]:
    """Name of the slack-relaxed constraint that needs the most slack."""
    worst, worst_name = 0.0, None
    scalars = dict(solution.scalar_values)
    scalars[SLACK_ID] = 0.0
    for c in problem.affine_constraints:
        if SLACK_ID not in c.functional.scalar_terms or c.name == "slack_nonnegative":
            continue
        gap = c.bound - c.functional.evaluate(solution.matrix_values, scalars)
        if gap > worst:
            worst, worst_name = gap, c.name
    for ld in problem.logdet_constraints:
        sign, value = np.linalg.slogdet(ld.matrix_map.evaluate(solution.matrix_values))
        gap = ld.bound - value if sign > 0 else math.inf
        if gap > worst:
            worst, worst_name = gap, ld.name
    return worst_name


def _restore_feasibility(algorithm: str, state: SCAState, cfg: AlgorithmConfig, scenario, data: ProblemData,
                         backend: CvxpyBackend) -> None:
    """
    Phase-1 SCA: minimise a common slack on every rate/CRB constraint.

    Moves `state.expansion_point` to a point whose surrogate is feasible.

    Raises:
        InfeasibleScenarioError: the slack cannot be driven to zero
        SolverFailureError: the backend fails on the phase-1 problem
    """
    logger.warning(f"{algorithm}/{data.selector.name}: surrogate infeasible, entering feasibility restoration")
    assembler = ASSEMBLERS[algorithm]
    problem, solution = None, None
    for attempt in range(cfg.j_max):
        problem = assembler(state, cfg, scenario, data=data, restoration=True)
        solution = backend.solve(problem)
        if not solution.optimal:
            raise SolverFailureError(f"Feasibility restoration solve returned {solution.status}",
                                     iteration=attempt, diagnostics=solution.solver_stats)
        slack = solution.scalar_values[SLACK_ID]
        point = data.without_idle(BeamformerSet.from_matrices(solution.matrix_values, data.n_users))
        state.expansion_point = point
        state.penalty_vectors = {k: refresh_penalty_vector(w)[0] for k, w in point.matrices().items()}
        logger.info(f"Restoration step {attempt + 1}: slack {slack:.3e}")
        if slack <= RESTORATION_SLACK_TOL:
            return
    worst = _worst_soft_constraint(problem, solution) if problem is not None else None
    raise InfeasibleScenarioError(f"No feasible point found; most violated constraint: {worst}", constraint=worst)


def feasibility_report(algorithm: str, bf: BeamformerSet, metrics: MetricsReport, alloc: RateAllocation,
                       cfg: AlgorithmConfig, crb_det: float) -> Dict[str, float]:
    """
    Exact constraint violations (0 when satisfied) at the returned beamformers.

    Keys: power, crb, qos, secrecy, private_secrecy, common_security,
    common_split, depending on the algorithm. The CRB entry is measured on
    the logdet scale, ln(det CRB) − ln crb_threshold.
    """
    report: Dict[str, float] = {}
    has_eaves = metrics.eaves_private_rates.size > 0
    if algorithm in ("alg1", "alg2"):
        report["power"] = max(metrics.total_power - cfg.p_max, 0.0)
    if math.isfinite(cfg.crb_threshold):
        report["crb"] = max(math.log(crb_det) - math.log(cfg.crb_threshold), 0.0) if crb_det > 0 else math.inf
    if bf.w_common is not None:
        report["common_split"] = max(sum(alloc.common_parts) - common_rate_budget(metrics), 0.0)
    if algorithm in ("alg1", "alg3"):
        report["qos"] = float(np.max(np.maximum(cfg.qos_threshold - metrics.total_rates, 0.0)))
    if algorithm == "alg1" and has_eaves:
        leak = metrics.private_rates[:, None] - metrics.eaves_private_rates
        report["secrecy"] = float(np.max(np.maximum(cfg.secrecy_threshold - leak, 0.0)))
        if bf.w_common is not None:
            report["common_security"] = max(-metrics.common_security_margin, 0.0)
    if algorithm == "alg2":
        report["secrecy"] = float(np.max(np.maximum(cfg.secrecy_threshold - metrics.secrecy_rates, 0.0)))
        if has_eaves and bf.w_common is not None:
            leak = metrics.private_rates[:, None] - metrics.eaves_private_rates
            report["private_secrecy"] = float(np.max(np.maximum(-leak, 0.0)))
    return report


def _crb_of(bf: BeamformerSet, data: ProblemData) -> float:
    try:
        return crb_determinant(fisher_information(sensing_covariance(bf, data.selector), data.sensing, data.array))
    except IllConditionedError as e:
        logger.warning(f"CRB not evaluable: {e}")
        return math.inf


def _sca_step(which: str, state: SCAState, cfg: AlgorithmConfig, scenario, data: ProblemData,
              backend: CvxpyBackend) -> Tuple[RateAllocation, MetricsReport, float]:
    """
    Solve the surrogate at the current expansion point and move there.

    An infeasible surrogate triggers feasibility restoration and one more solve.

    Returns:
        Fitted allocation, exact metrics and the rank-1 penalty of the new point
    """
    assembler = ASSEMBLERS[which]
    solution = backend.solve(assembler(state, cfg, scenario, data=data))
    if solution.status == SOLUTION_INFEASIBLE:
        _restore_feasibility(which, state, cfg, scenario, data, backend)
        solution = backend.solve(assembler(state, cfg, scenario, data=data))
        if solution.status == SOLUTION_INFEASIBLE:
            raise InfeasibleScenarioError("Surrogate stays infeasible after restoration")
    if not solution.optimal:
        raise SolverFailureError(f"Solver returned {solution.status}", iteration=state.iteration,
                                 diagnostics=solution.solver_stats)

    point = data.without_idle(BeamformerSet.from_matrices(solution.matrix_values, data.n_users))
    alloc, metrics = _fitted_metrics(point, _allocation(which, solution, data.layout), data.channels)
    penalty = _penalty_total(point, state.penalty_vectors)
    state.advance(point, objective_value(which, metrics))
    if cfg.penalty_ramp:
        state.penalty_weight = min(state.penalty_weight * PENALTY_RAMP_FACTOR, PENALTY_RAMP_CAP)
    return alloc, metrics, penalty


def _sca_at_fixed_factor(which: str, state: SCAState, cfg: AlgorithmConfig, scenario, data: ProblemData,
                         backend: CvxpyBackend) -> Tuple[RateAllocation, MetricsReport, float]:
    """SCA steps at the current Dinkelbach factor until the exact ratio settles."""
    inner: List[float] = []
    while True:
        alloc, metrics, penalty = _sca_step(which, state, cfg, scenario, data, backend)
        inner.append(state.objective_trace[-1])
        if converged(inner, cfg.tau, INNER_J_MAX, relative=True):
            if len(inner) == INNER_J_MAX:
                logger.warning(f"{which}/{data.selector.name}: SCA at lambda {state.dinkelbach_factor:.6g} "
                               f"stopped after {INNER_J_MAX} steps")
            return alloc, metrics, penalty


def run_algorithm(which: str, scheme, cfg: AlgorithmConfig, scenario,
                  backend: Optional[CvxpyBackend] = None) -> RunResult:
    """
    Run alg1, alg2 or alg3 for one scheme until the objective settles.

    alg1 and alg2 run SCA to a fixed point for each Dinkelbach factor before
    updating it, so every objective trace entry is one factor update. alg3
    records one entry per SCA step. The trace is converged when its last
    relative step is at most tau.

    Args:
        which: 'alg1', 'alg2' or 'alg3'
        scheme: Scheme name or SchemeSelector; overrides cfg.selector
        cfg: Thresholds, budget and SCA settings
        scenario: ScenarioConfig (or any object with the same geometry fields)
        backend: Conic backend; a default CvxpyBackend when omitted

    Returns:
        RunResult with rank-1 beamformers and exact metrics; failures are
        reported through its status, never raised
    """
    if which not in ALGORITHMS:
        raise InvalidInputError(f"Unknown algorithm '{which}', expected one of {ALGORITHMS}")
    selector = get_scheme(scheme)
    cfg = replace(cfg, selector=selector)
    backend = backend or CvxpyBackend()
    data = build_problem_data(scenario, selector, cfg.crb_threshold, cfg.p_max)
    result = RunResult(algorithm=which, scheme=selector.name, status=STATUS_ITERATION_LIMIT)

    start = data.without_idle(initial_point(data.layout, [h.covariance for h in data.channels.users], cfg.p_max,
                                            data.array, data.sensing.target_azimuths[0]))
    state = SCAState(start, penalty_weight=cfg.penalty_weight)
    state.penalty_vectors = {k: refresh_penalty_vector(w)[0] for k, w in start.matrices().items()}
    fractional = which != "alg3"
    step = _sca_at_fixed_factor if fractional else _sca_step
    alloc = RateAllocation.zeros(data.n_users, secrecy=which == "alg2")

    logger.info(f"Starting {which} with {selector.name}: K={data.n_users}, M={data.n_eaves}, "
                f"N_t={data.array.n_tx}, P_max={cfg.p_max:.4g} W")
    try:
        while len(result.objective_trace) < cfg.j_max:
            factor = state.dinkelbach_factor
            alloc, metrics, penalty = step(which, state, cfg, scenario, data, backend)
            value = objective_value(which, metrics)
            result.objective_trace.append(value)
            result.dinkelbach_trace.append(factor)
            result.penalty_trace.append(penalty)
            if fractional and metrics.total_power > 0:
                state.dinkelbach_factor = dinkelbach_update(_dinkelbach_metric(which, metrics), metrics.total_power)
            logger.info(f"{which}/{selector.name} iteration {len(result.objective_trace)}: objective {value:.6g}, "
                        f"lambda {factor:.6g}, penalty {penalty:.3e}, {state.iteration} SCA steps")
            if converged(result.objective_trace, cfg.tau, cfg.j_max, relative=True):
                trace = result.objective_trace
                if len(trace) >= 2 and abs(trace[-1] - trace[-2]) <= cfg.tau * max(1.0, abs(trace[-2])):
                    result.status = STATUS_CONVERGED
                break
    except InfeasibleScenarioError as e:
        logger.error(f"{which}/{selector.name} infeasible: {e}")
        result.status, result.message, result.failed_constraint = STATUS_INFEASIBLE, str(e), e.constraint
        return result
    except (SolverFailureError, DegenerateExpansionPointError) as e:
        logger.error(f"{which}/{selector.name} failed at SCA step {state.iteration}: {e}")
        result.status, result.message = STATUS_NUMERICAL_FAILURE, str(e)
        return result

    if not result.objective_trace:
        result.status, result.message = STATUS_NUMERICAL_FAILURE, "No iteration completed"
        return result
    return _finalize(result, which, state, alloc, cfg, data)


def _finalize(result: RunResult, which: str, state: SCAState, alloc: RateAllocation, cfg: AlgorithmConfig,
              data: ProblemData) -> RunResult:
    relaxed = state.expansion_point
    result.relaxed_beamformers = relaxed
    result.rank_one_residuals = {k: rank_one_residual(w) for k, w in relaxed.matrices().items()}
    _, result.relaxed_metrics = _fitted_metrics(relaxed, alloc, data.channels)

    final = rank_one_projection(relaxed)
    if which == "alg3":
        try:
            final.w_an = allocate_an(cfg.p_max, final.total_power, data.array.n_tx)
        except OverBudgetError as e:
            logger.error(str(e))
            result.status, result.message, result.failed_constraint = STATUS_INFEASIBLE, str(e), "power"
    result.allocation, result.metrics = _fitted_metrics(final, alloc, data.channels)
    result.beamformers = final
    result.crb_det = _crb_of(final, data)
    result.feasibility_report = feasibility_report(which, final, result.metrics, result.allocation, cfg,
                                                   result.crb_det)
    if which == "alg3" and final.w_an is not None and data.n_eaves:
        common, private = eaves_rates(final, data.channels, include_an=True)
        result.an_eaves_rates = {
            "common_with_an": common.tolist(),
            "private_with_an": private.tolist(),
            "common_without_an": result.metrics.eaves_common_rates.tolist(),
            "private_without_an": result.metrics.eaves_private_rates.tolist(),
        }
    worst = max(result.feasibility_report.values(), default=0.0)
    if worst > FEASIBILITY_TOL:
        logger.warning(f"{which}/{result.scheme}: exact constraint violation {worst:.3e} after rank-1 extraction")
    logger.info(f"{which}/{result.scheme} finished: status {result.status}, objective {result.objective:.6g}, "
                f"{result.iterations} iterations")
    return result


__all__ = [
    'ALGORITHMS', 'AlgorithmConfig', 'RunResult', 'ProblemData', 'layout_for', 'build_problem_data',
    'SurrogateBuilder', 'assemble_p13', 'assemble_p21', 'assemble_p31', 'assemble_sdma', 'ASSEMBLERS',
    'lmi_census', 'allocate_an', 'objective_value', 'feasibility_report', 'run_algorithm',
]
