"""
Expected SINRs, rates, secrecy rates and rate-to-power ratios.

Every SINR is a ratio of trace products tr(H·W) with the closed-form channel
covariance, i.e. the expected-SINR approximation used throughout the
optimisation. Users and the radar receiver cancel artificial noise, so W_AN
only ever enters an eavesdropper's interference (and only on request).
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config.constants import HERMITIAN_TOL
from utils.errors import DegeneratePowerError, InvalidInputError
from utils.geometry_utils import ArrayConfig, ChannelStats, UserGeometry, channel_covariance

logger = logging.getLogger(__name__)

COMMON_ID = "W_c"
EXTRA_ID = "W_v"
AN_ID = "W_AN"


def private_id(user_index: int) -> str:
    """Matrix id of user `user_index` (0-based); labels are 1-based."""
    return f"W_{user_index + 1}"


def _as_hermitian(matrix: np.ndarray, name: str) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {matrix.shape}")
    scale = max(1.0, float(np.max(np.abs(matrix)))) if matrix.size else 1.0
    if np.max(np.abs(matrix - matrix.conj().T), initial=0.0) > HERMITIAN_TOL * scale:
        raise InvalidInputError(f"{name} is not Hermitian")
    return 0.5 * (matrix + matrix.conj().T)


def trace_product(coefficient: np.ndarray, matrix: np.ndarray) -> float:
    """Re tr(C·W) without forming the product."""
    return float(np.real(np.sum(coefficient * matrix.T)))


@dataclass
class BeamformerSet:
    """
    Transmit covariance matrices.

    w_common is None for SDMA, w_extra is None when no dedicated sensing
    sequence is sent (Ben1). w_an is never part of the optimised power.
    """
    w_private: List[np.ndarray]
    w_common: Optional[np.ndarray] = None
    w_extra: Optional[np.ndarray] = None
    w_an: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(self.w_private) < 1:
            raise InvalidInputError("At least one private beamformer is required")
        self.w_private = [_as_hermitian(w, private_id(k)) for k, w in enumerate(self.w_private)]
        if self.w_common is not None:
            self.w_common = _as_hermitian(self.w_common, COMMON_ID)
        if self.w_extra is not None:
            self.w_extra = _as_hermitian(self.w_extra, EXTRA_ID)
        if self.w_an is not None:
            self.w_an = _as_hermitian(self.w_an, AN_ID)
        sizes = {w.shape[0] for w in self.matrices(include_an=True).values()}
        if len(sizes) != 1:
            raise InvalidInputError(f"Beamformer dimensions disagree: {sorted(sizes)}")

    @property
    def n_tx(self) -> int:
        return self.w_private[0].shape[0]

    @property
    def n_users(self) -> int:
        return len(self.w_private)

    @property
    def total_power(self) -> float:
        """tr(W_c) + Σ tr(W_k) + tr(W_v); W_AN excluded."""
        return float(sum(np.real(np.trace(w)) for w in self.matrices().values()))

    def matrices(self, include_an: bool = False) -> Dict[str, np.ndarray]:
        """Present matrices keyed by id, common first, then private, then extra."""
        result: Dict[str, np.ndarray] = {}
        if self.w_common is not None:
            result[COMMON_ID] = self.w_common
        for k, w in enumerate(self.w_private):
            result[private_id(k)] = w
        if self.w_extra is not None:
            result[EXTRA_ID] = self.w_extra
        if include_an and self.w_an is not None:
            result[AN_ID] = self.w_an
        return result

    def is_psd(self, tol: float = 1e-9) -> bool:
        for w in self.matrices(include_an=True).values():
            scale = max(float(np.real(np.trace(w))), 0.0)
            if np.linalg.eigvalsh(w)[0] < -tol * scale - 1e-15:
                return False
        return True

    @classmethod
    def from_matrices(cls, matrices: Dict[str, np.ndarray], n_users: int,
                      w_an: Optional[np.ndarray] = None) -> "BeamformerSet":
        return cls(
            w_private=[matrices[private_id(k)] for k in range(n_users)],
            w_common=matrices.get(COMMON_ID),
            w_extra=matrices.get(EXTRA_ID),
            w_an=w_an,
        )

    @classmethod
    def zeros(cls, n_tx: int, n_users: int, common: bool = True, extra: bool = True) -> "BeamformerSet":
        blank = np.zeros((n_tx, n_tx), dtype=complex)
        return cls(
            w_private=[blank.copy() for _ in range(n_users)],
            w_common=blank.copy() if common else None,
            w_extra=blank.copy() if extra else None,
        )


@dataclass(frozen=True)
class RateAllocation:
    """Common-rate shares c_k and, for secrecy designs, c^sec_{c,k} (bits/s/Hz)."""
    common_parts: Tuple[float, ...]
    secrecy_common_parts: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "common_parts", tuple(float(c) for c in self.common_parts))
        if self.secrecy_common_parts is not None:
            object.__setattr__(self, "secrecy_common_parts", tuple(float(c) for c in self.secrecy_common_parts))
            if len(self.secrecy_common_parts) != len(self.common_parts):
                raise InvalidInputError("secrecy_common_parts must have one entry per user")
        if any(c < 0 for c in self.common_parts + (self.secrecy_common_parts or ())):
            raise InvalidInputError("Rate allocations must be non-negative")

    @classmethod
    def zeros(cls, n_users: int, secrecy: bool = False) -> "RateAllocation":
        return cls((0.0,) * n_users, (0.0,) * n_users if secrecy else None)


@dataclass
class ChannelSet:
    """Channel statistics and noise powers of every user and eavesdropper."""
    users: List[ChannelStats]
    eavesdroppers: List[ChannelStats] = field(default_factory=list)
    user_noise: List[float] = field(default_factory=list)
    eaves_noise: List[float] = field(default_factory=list)

    def __post_init__(self):
        if not self.users:
            raise InvalidInputError("ChannelSet needs at least one user")
        if len(self.user_noise) != len(self.users) or len(self.eaves_noise) != len(self.eavesdroppers):
            raise InvalidInputError("One noise power per user and per eavesdropper is required")
        for sigma in list(self.user_noise) + list(self.eaves_noise):
            if sigma < 0:
                raise InvalidInputError(f"Negative noise power {sigma}")

    @classmethod
    def from_geometry(cls, users: Sequence[UserGeometry], eavesdroppers: Sequence[UserGeometry],
                      array: ArrayConfig, user_noise: float, eaves_noise: float) -> "ChannelSet":
        return cls(
            users=[channel_covariance(g, array) for g in users],
            eavesdroppers=[channel_covariance(g, array) for g in eavesdroppers],
            user_noise=[float(user_noise)] * len(users),
            eaves_noise=[float(eaves_noise)] * len(eavesdroppers),
        )


@dataclass
class MetricsReport:
    common_rates: np.ndarray
    private_rates: np.ndarray
    total_rates: np.ndarray
    eaves_common_rates: np.ndarray
    eaves_private_rates: np.ndarray
    secrecy_rates: np.ndarray
    total_power: float
    urpr: np.ndarray
    usrpr: np.ndarray
    degenerate_power: bool = False

    @property
    def min_rate(self) -> float:
        return float(np.min(self.total_rates))

    @property
    def min_secrecy_rate(self) -> float:
        return float(np.min(self.secrecy_rates))

    @property
    def common_security_margin(self) -> float:
        """min_k R_{c,k} − max_m R^E_{c,m}; +inf without eavesdroppers."""
        if self.eaves_common_rates.size == 0:
            return float("inf")
        return common_rate_budget(self.common_rates) - float(np.max(self.eaves_common_rates))

    def to_dict(self) -> Dict[str, object]:
        return {
            "common_rates": self.common_rates.tolist(),
            "private_rates": self.private_rates.tolist(),
            "total_rates": self.total_rates.tolist(),
            "eaves_common_rates": self.eaves_common_rates.tolist(),
            "eaves_private_rates": self.eaves_private_rates.tolist(),
            "secrecy_rates": self.secrecy_rates.tolist(),
            "total_power": self.total_power,
            "urpr": self.urpr.tolist(),
            "usrpr": self.usrpr.tolist(),
            "degenerate_power": self.degenerate_power,
        }


def _check_noise(noise_power: float) -> None:
    if noise_power < 0 or not np.isfinite(noise_power):
        raise InvalidInputError(f"noise_power must be a finite non-negative number, got {noise_power}")


def _check_user(bf: BeamformerSet, user_index: int) -> None:
    if not 0 <= user_index < bf.n_users:
        raise InvalidInputError(f"user_index {user_index} out of range for K={bf.n_users}")


def _ratio(numerator: float, denominator: float) -> float:
    if numerator <= 0:
        return 0.0
    if denominator <= 0:
        return float("inf")
    return numerator / denominator


def _sum_traces(cov: np.ndarray, matrices: Sequence[Optional[np.ndarray]]) -> float:
    return sum(trace_product(cov, w) for w in matrices if w is not None)


def common_sinr(bf: BeamformerSet, ch: ChannelStats, noise_power: float) -> float:
    """tr(H·W_c) / (tr(H·ΣW_i) + tr(H·W_v) + σ²); zero for SDMA sets."""
    _check_noise(noise_power)
    if bf.w_common is None:
        return 0.0
    H = ch.covariance
    interference = _sum_traces(H, bf.w_private + [bf.w_extra])
    return _ratio(trace_product(H, bf.w_common), interference + noise_power)


def private_sinr(bf: BeamformerSet, ch: ChannelStats, user_index: int, noise_power: float) -> float:
    """
    Private-stream SINR of user `user_index` after the common stream is removed.

    Args:
        bf: Beamformer set
        ch: The user's channel statistics
        user_index: 0-based user index
        noise_power: Receiver noise power in watts
    """
    _check_noise(noise_power)
    _check_user(bf, user_index)
    H = ch.covariance
    others = [w for i, w in enumerate(bf.w_private) if i != user_index]
    interference = _sum_traces(H, others + [bf.w_extra])
    return _ratio(trace_product(H, bf.w_private[user_index]), interference + noise_power)


def eaves_common_sinr(bf: BeamformerSet, ch_eaves: ChannelStats, noise_power: float,
                      include_an: bool = False) -> float:
    _check_noise(noise_power)
    if bf.w_common is None:
        return 0.0
    G = ch_eaves.covariance
    interference = _sum_traces(G, bf.w_private + [bf.w_extra, bf.w_an if include_an else None])
    return _ratio(trace_product(G, bf.w_common), interference + noise_power)


def eaves_private_sinr(bf: BeamformerSet, ch_eaves: ChannelStats, user_index: int, noise_power: float,
                       include_an: bool = False) -> float:
    """Eavesdropper SINR on user k's private stream; W_c stays in the interference."""
    _check_noise(noise_power)
    _check_user(bf, user_index)
    G = ch_eaves.covariance
    others = [w for i, w in enumerate(bf.w_private) if i != user_index]
    interference = _sum_traces(G, [bf.w_common] + others + [bf.w_extra, bf.w_an if include_an else None])
    return _ratio(trace_product(G, bf.w_private[user_index]), interference + noise_power)


def rate(sinr: float) -> float:
    return float(np.log2(1.0 + sinr))


def eaves_rates(bf: BeamformerSet, channels: ChannelSet, include_an: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """(R^E_{c,m} for every m, R^E_{p,k,m} as a K×M array)."""
    n_eaves = len(channels.eavesdroppers)
    common = np.array([
        rate(eaves_common_sinr(bf, g, s, include_an))
        for g, s in zip(channels.eavesdroppers, channels.eaves_noise)
    ], dtype=float)
    private = np.zeros((bf.n_users, n_eaves))
    for k in range(bf.n_users):
        for m, (g, s) in enumerate(zip(channels.eavesdroppers, channels.eaves_noise)):
            private[k, m] = rate(eaves_private_sinr(bf, g, k, s, include_an))
    return common, private


def common_rate_budget(reports: Union[MetricsReport, Sequence[float], np.ndarray]) -> float:
    """R_c = min_k R_{c,k}."""
    common = reports.common_rates if isinstance(reports, MetricsReport) else np.asarray(reports, dtype=float)
    if common.size == 0:
        raise InvalidInputError("common_rate_budget needs at least one user")
    return float(np.min(common))


def common_secrecy_budget(report: MetricsReport) -> float:
    """[min_k R_{c,k} − max_m R^E_{c,m}]⁺, the pool the c^sec_{c,k} shares come from."""
    margin = report.common_security_margin
    if np.isinf(margin):
        return common_rate_budget(report)
    return max(margin, 0.0)


def evaluate(bf: BeamformerSet, alloc: RateAllocation, channels: ChannelSet) -> MetricsReport:
    """
    Exact (expected-SINR) metrics of a beamformer set under a rate allocation.

    Args:
        bf: Beamformer set
        alloc: Common-rate shares; must have one entry per user
        channels: Channel statistics and noise powers

    Returns:
        MetricsReport; ratios are zero and `degenerate_power` set when P = 0
    """
    n_users = bf.n_users
    if len(channels.users) != n_users or len(alloc.common_parts) != n_users:
        raise InvalidInputError(
            f"Inconsistent user count: beamformers {n_users}, channels {len(channels.users)}, "
            f"allocation {len(alloc.common_parts)}"
        )
    common = np.array([rate(common_sinr(bf, h, s)) for h, s in zip(channels.users, channels.user_noise)])
    private = np.array([
        rate(private_sinr(bf, h, k, s)) for k, (h, s) in enumerate(zip(channels.users, channels.user_noise))
    ])
    total = np.asarray(alloc.common_parts, dtype=float) + private
    eaves_common, eaves_private = eaves_rates(bf, channels)

    leak = np.max(eaves_private, axis=1) if eaves_private.shape[1] else np.zeros(n_users)
    secrecy_common = np.asarray(alloc.secrecy_common_parts or (0.0,) * n_users, dtype=float)
    secrecy = secrecy_common + np.maximum(private - leak, 0.0)

    power = bf.total_power
    degenerate = power <= 0.0
    if degenerate:
        if np.any(np.asarray(alloc.common_parts) > 0) or np.any(secrecy_common > 0):
            raise DegeneratePowerError("Nonzero rate allocation requested with zero transmit power")
        urpr = np.zeros(n_users)
        usrpr = np.zeros(n_users)
    else:
        urpr = total / power
        usrpr = secrecy / power

    return MetricsReport(
        common_rates=common,
        private_rates=private,
        total_rates=total,
        eaves_common_rates=eaves_common,
        eaves_private_rates=eaves_private,
        secrecy_rates=secrecy,
        total_power=power,
        urpr=urpr,
        usrpr=usrpr,
        degenerate_power=degenerate,
    )


def security_constraint_satisfied(report: MetricsReport, tol: float = 1e-6) -> bool:
    """max_m R^E_{c,m} ≤ min_k R_{c,k} up to `tol`."""
    return report.common_security_margin >= -tol


def fit_allocation(alloc: RateAllocation, budget: float, secrecy_budget: Optional[float] = None) -> RateAllocation:
    """
    Scale shares down proportionally so Σc_k ≤ budget (and Σc^sec ≤ secrecy_budget).

    Rank-1 extraction can shrink R_c slightly below what the relaxed solution
    promised; the shares have to follow.
    """
    def _fit(parts, limit):
        total = sum(parts)
        limit = max(limit, 0.0)
        if total <= limit or total <= 0:
            return parts
        return tuple(c * limit / total for c in parts)

    common = _fit(alloc.common_parts, budget)
    secrecy = alloc.secrecy_common_parts
    if secrecy is not None and secrecy_budget is not None:
        secrecy = _fit(secrecy, secrecy_budget)
    return RateAllocation(common, secrecy)


def power_allocation(bf: BeamformerSet) -> Dict[str, float]:
    """Watts per matrix, W_AN included when present."""
    return {name: float(np.real(np.trace(w))) for name, w in bf.matrices(include_an=True).items()}


__all__ = [
    'COMMON_ID', 'EXTRA_ID', 'AN_ID', 'private_id', 'trace_product', 'BeamformerSet', 'RateAllocation',
    'ChannelSet', 'MetricsReport', 'common_sinr', 'private_sinr', 'eaves_common_sinr', 'eaves_private_sinr',
    'rate', 'eaves_rates', 'common_rate_budget', 'common_secrecy_budget', 'evaluate',
    'security_constraint_satisfied', 'fit_allocation', 'power_allocation',
]
