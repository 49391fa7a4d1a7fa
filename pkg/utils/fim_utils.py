"""
Sensing covariance, Fisher information over (θ, Re β, Im β) and the CRB metric.

The echo model is Y = A_r·B·A_tᵀ·X + Z with R = X·Xᴴ/L. The block formulas
below carry R* (the conjugate sensing covariance); with the A_tᵀ model they
are the exact Fisher information of the Gaussian likelihood, which is what
tests/test_fim_utils.py checks against numerical differentiation.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Tuple

import numpy as np

from config.constants import DEFAULT_AMPLITUDE, DEFAULT_SNAPSHOTS, HERMITIAN_TOL, ILL_CONDITION_LIMIT
from utils.errors import IllConditionedError, InvalidInputError
from utils.geometry_utils import ArrayConfig, steering_derivative_matrix, steering_matrix
from utils.metrics_utils import COMMON_ID, EXTRA_ID, BeamformerSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SensingGeometry:
    target_azimuths: Tuple[float, ...]
    amplitudes: Tuple[complex, ...] = ()
    snapshots: int = DEFAULT_SNAPSHOTS
    sensing_noise_power: float = 1e-10

    def __post_init__(self):
        azimuths = tuple(float(a) for a in self.target_azimuths)
        if len(azimuths) < 1:
            raise InvalidInputError("At least one sensing target is required")
        amplitudes = tuple(complex(b) for b in self.amplitudes) or (DEFAULT_AMPLITUDE,) * len(azimuths)
        if len(amplitudes) != len(azimuths):
            raise InvalidInputError(f"Expected {len(azimuths)} amplitudes, got {len(amplitudes)}")
        if not all(np.isfinite(b) for b in amplitudes) or not all(np.isfinite(a) for a in azimuths):
            raise InvalidInputError("Target azimuths and amplitudes must be finite")
        if int(self.snapshots) < 1:
            raise InvalidInputError(f"snapshots must be >= 1, got {self.snapshots}")
        if not self.sensing_noise_power > 0:
            raise InvalidInputError(f"sensing_noise_power must be positive, got {self.sensing_noise_power}")
        object.__setattr__(self, "target_azimuths", azimuths)
        object.__setattr__(self, "amplitudes", amplitudes)
        object.__setattr__(self, "snapshots", int(self.snapshots))

    @property
    def n_targets(self) -> int:
        return len(self.target_azimuths)


@dataclass(frozen=True)
class SchemeSelector:
    """Which signals form the sensing covariance R = α1·W_c + α2·W_v."""
    name: str
    alpha1: int
    alpha2: int
    extra_signal_present: bool = True
    rsma: bool = True

    def __post_init__(self):
        if self.alpha1 not in (0, 1) or self.alpha2 not in (0, 1):
            raise InvalidInputError("alpha1 and alpha2 are binary")
        if self.alpha1 == 0 and self.alpha2 == 0:
            raise InvalidInputError(f"Scheme {self.name}: alpha1 and alpha2 cannot both be 0")
        if self.alpha2 and not self.extra_signal_present:
            raise InvalidInputError(f"Scheme {self.name}: alpha2 = 1 needs the extra signal")
        if self.alpha1 and not self.rsma:
            raise InvalidInputError(f"Scheme {self.name}: alpha1 = 1 needs a common stream")

    def weights(self) -> Dict[str, float]:
        """Matrix id → weight in the sensing covariance."""
        result = {}
        if self.alpha1:
            result[COMMON_ID] = 1.0
        if self.alpha2:
            result[EXTRA_ID] = 1.0
        return result


SCHEMES: Dict[str, SchemeSelector] = {
    "scheme1": SchemeSelector("scheme1", alpha1=0, alpha2=1),
    "scheme2": SchemeSelector("scheme2", alpha1=1, alpha2=0),
    "scheme3": SchemeSelector("scheme3", alpha1=1, alpha2=1),
    "ben1": SchemeSelector("ben1", alpha1=1, alpha2=0, extra_signal_present=False),
    "sdma": SchemeSelector("sdma", alpha1=0, alpha2=1, rsma=False),
}


def get_scheme(name) -> SchemeSelector:
    if isinstance(name, SchemeSelector):
        return name
    try:
        return SCHEMES[str(name).lower()]
    except KeyError:
        raise InvalidInputError(f"Unknown scheme '{name}', expected one of {sorted(SCHEMES)}") from None


@dataclass(frozen=True, eq=False)
class FisherInformation:
    block_f11: np.ndarray
    block_f12: np.ndarray
    block_f22: np.ndarray
    full: np.ndarray = field(repr=False)

    @cached_property
    def crb_det(self) -> float:
        return crb_determinant(self)

    @property
    def logdet(self) -> float:
        sign, value = np.linalg.slogdet(self.full)
        return float(value) if sign > 0 else float("-inf")


def sensing_covariance(bf: BeamformerSet, sel: SchemeSelector) -> np.ndarray:
    """R = α1·W_c + α2·W_v."""
    matrices = bf.matrices()
    R = np.zeros((bf.n_tx, bf.n_tx), dtype=complex)
    for matrix_id, weight in sel.weights().items():
        if matrix_id not in matrices:
            raise InvalidInputError(f"Scheme {sel.name} senses with {matrix_id}, which this beamformer set lacks")
        R = R + weight * matrices[matrix_id]
    return R


def _fim_blocks(R: np.ndarray, geom: SensingGeometry, array: ArrayConfig):
    At = steering_matrix(geom.target_azimuths, array.n_tx, array.spacing_ratio)
    Ar = steering_matrix(geom.target_azimuths, array.n_rx, array.spacing_ratio)
    dAt = steering_derivative_matrix(geom.target_azimuths, array.n_tx, array.spacing_ratio)
    dAr = steering_derivative_matrix(geom.target_azimuths, array.n_rx, array.spacing_ratio)
    beta = np.asarray(geom.amplitudes, dtype=complex)
    Rc = R.conj()
    L = geom.snapshots

    def with_b(mat, left=True, right=True):
        out = mat
        if left:
            out = beta.conj()[:, None] * out
        if right:
            out = out * beta[None, :]
        return out

    At_R_At = At.conj().T @ Rc @ At
    At_R_dAt = At.conj().T @ Rc @ dAt
    dAt_R_At = dAt.conj().T @ Rc @ At
    dAt_R_dAt = dAt.conj().T @ Rc @ dAt

    f11 = L * (
        (dAr.conj().T @ dAr) * with_b(At_R_At)
        + (dAr.conj().T @ Ar) * with_b(At_R_dAt)
        + (Ar.conj().T @ dAr) * with_b(dAt_R_At)
        + (Ar.conj().T @ Ar) * with_b(dAt_R_dAt)
    )
    f12 = L * (
        (dAr.conj().T @ Ar) * with_b(At_R_At, right=False)
        + (Ar.conj().T @ Ar) * with_b(dAt_R_At, right=False)
    )
    f22 = L * (Ar.conj().T @ Ar) * At_R_At

    scale = 2.0 / geom.sensing_noise_power
    full = scale * np.block([
        [f11.real, f12.real, -f12.imag],
        [f12.real.T, f22.real, -f22.imag],
        [-f12.imag.T, -f22.imag.T, f22.real],
    ])
    return f11, f12, f22, 0.5 * (full + full.T)


def fisher_information(R: np.ndarray, geom: SensingGeometry, array: ArrayConfig) -> FisherInformation:
    """
    Assemble the 3T×3T real FIM for the sensing covariance R.

    Args:
        R: Hermitian sensing covariance of size n_tx
        geom: Targets, amplitudes, snapshots and radar noise
        array: Transmit/receive arrays

    Returns:
        FisherInformation with the complex blocks and the real matrix
    """
    R = np.asarray(R, dtype=complex)
    if R.shape != (array.n_tx, array.n_tx):
        raise InvalidInputError(f"Sensing covariance must be {array.n_tx}x{array.n_tx}, got {R.shape}")
    if np.max(np.abs(R - R.conj().T), initial=0.0) > HERMITIAN_TOL * max(1.0, float(np.max(np.abs(R)))):
        raise InvalidInputError("Sensing covariance is not Hermitian")
    f11, f12, f22, full = _fim_blocks(R, geom, array)
    return FisherInformation(block_f11=f11, block_f12=f12, block_f22=f22, full=full)


def crb_determinant(fim: FisherInformation) -> float:
    """det(F⁻¹); raises IllConditionedError above the condition limit."""
    condition = float(np.linalg.cond(fim.full))
    if not np.isfinite(condition) or condition > ILL_CONDITION_LIMIT:
        raise IllConditionedError(f"FIM condition number {condition:.3e} exceeds {ILL_CONDITION_LIMIT:.0e}",
                                  condition_number=condition)
    sign, logdet = np.linalg.slogdet(fim.full)
    if sign <= 0:
        raise IllConditionedError("FIM is not positive definite", condition_number=condition)
    return float(np.exp(-logdet))


def logdet_floor(threshold: float) -> float:
    """|det CRB| ≤ threshold ⇔ logdet F ≥ −ln threshold."""
    if not threshold > 0:
        raise InvalidInputError(f"CRB threshold must be positive, got {threshold}")
    return float(-np.log(threshold))


def hermitian_basis(n: int):
    """Orthonormal basis of n×n Hermitian matrices under ⟨A, B⟩ = Re tr(A·B)."""
    for a in range(n):
        E = np.zeros((n, n), dtype=complex)
        E[a, a] = 1.0
        yield E
    for a in range(n):
        for b in range(a + 1, n):
            E = np.zeros((n, n), dtype=complex)
            E[a, b] = E[b, a] = 1.0 / np.sqrt(2.0)
            yield E
            E = np.zeros((n, n), dtype=complex)
            E[a, b] = 1j / np.sqrt(2.0)
            E[b, a] = -1j / np.sqrt(2.0)
            yield E


def fim_coefficients(geom: SensingGeometry, array: ArrayConfig) -> np.ndarray:
    """
    Coefficients C with F_ij = Re tr(C_ij·R) for every Hermitian R.

    Returns:
        Complex array of shape (3T, 3T, n_tx, n_tx); each C_ij is Hermitian
    """
    d = 3 * geom.n_targets
    n = array.n_tx
    coefficients = np.zeros((d, d, n, n), dtype=complex)
    for E in hermitian_basis(n):
        full = _fim_blocks(E, geom, array)[3]
        coefficients += full[:, :, None, None] * E[None, None, :, :]
    return coefficients


def fim_from_coefficients(coefficients: np.ndarray, R: np.ndarray) -> np.ndarray:
    return np.real(np.einsum("ijab,ba->ij", coefficients, R))


__all__ = [
    'SensingGeometry', 'SchemeSelector', 'SCHEMES', 'get_scheme', 'FisherInformation', 'sensing_covariance',
    'fisher_information', 'crb_determinant', 'logdet_floor', 'hermitian_basis', 'fim_coefficients',
    'fim_from_coefficients',
]
