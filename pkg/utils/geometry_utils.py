"""
Uniform linear array responses and Rician channel statistics.

All angles are radians and all gains linear; unit conversion happens when a
scenario file is loaded (config/scenario_config.py).
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from config.constants import DEFAULT_SPACING_RATIO
from utils.errors import InvalidInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ArrayConfig:
    """Transmit/receive ULA sizes and the element spacing in wavelengths."""
    n_tx: int
    n_rx: int
    spacing_ratio: float = DEFAULT_SPACING_RATIO

    def __post_init__(self):
        if int(self.n_tx) < 1 or int(self.n_rx) < 1:
            raise InvalidInputError(f"Array needs at least one element, got n_tx={self.n_tx}, n_rx={self.n_rx}")
        if not self.spacing_ratio > 0:
            raise InvalidInputError(f"spacing_ratio must be positive, got {self.spacing_ratio}")


@dataclass(frozen=True)
class UserGeometry:
    """Position and large-scale fading of a user or an eavesdropper."""
    distance: float
    azimuth: float
    rician_factor: float
    pathloss_exponent: float
    ref_gain: float

    def __post_init__(self):
        if not self.distance > 0:
            raise InvalidInputError(f"distance must be positive, got {self.distance}")
        if not self.ref_gain > 0:
            raise InvalidInputError(f"ref_gain must be positive, got {self.ref_gain}")
        if self.rician_factor < 0:
            raise InvalidInputError(f"rician_factor must be non-negative, got {self.rician_factor}")
        if not self.pathloss_exponent > 0:
            raise InvalidInputError(f"pathloss_exponent must be positive, got {self.pathloss_exponent}")
        if not math.isfinite(self.azimuth):
            raise InvalidInputError(f"azimuth must be finite, got {self.azimuth}")

    @property
    def large_scale_gain(self) -> float:
        return self.ref_gain / self.distance ** self.pathloss_exponent


@dataclass(frozen=True, eq=False)
class ChannelStats:
    """
    Second-order statistics E{h hᴴ} = los_coeff·h̄h̄ᴴ + nlos_coeff·I.

    `covariance` is stored so that trace products against beamformers do not
    rebuild it each time.
    """
    covariance: np.ndarray
    los_coeff: float
    nlos_coeff: float
    los_vector: np.ndarray

    @property
    def n_tx(self) -> int:
        return self.covariance.shape[0]


def _check_angle(azimuth: float, n_elems: int) -> None:
    if not np.isfinite(azimuth):
        raise InvalidInputError(f"Non-finite azimuth {azimuth}")
    if int(n_elems) < 1:
        raise InvalidInputError(f"n_elems must be >= 1, got {n_elems}")


def steering_vector(azimuth: float, n_elems: int, spacing_ratio: float = DEFAULT_SPACING_RATIO) -> np.ndarray:
    """
    ULA response a(θ) with entries exp(j·2π·(d/λ)·n·sin θ).

    Args:
        azimuth: Angle from broadside in radians
        n_elems: Number of array elements
        spacing_ratio: Element spacing over wavelength

    Returns:
        Complex vector of length n_elems; element 0 is exactly 1
    """
    _check_angle(azimuth, n_elems)
    n = np.arange(int(n_elems))
    return np.exp(1j * 2.0 * np.pi * spacing_ratio * n * np.sin(azimuth))


def steering_derivative(azimuth: float, n_elems: int, spacing_ratio: float = DEFAULT_SPACING_RATIO) -> np.ndarray:
    """∂a(θ)/∂θ = j·2π·(d/λ)·n·cos θ · a(θ)."""
    _check_angle(azimuth, n_elems)
    n = np.arange(int(n_elems))
    phase_rate = 2.0 * np.pi * spacing_ratio * n * np.cos(azimuth)
    return 1j * phase_rate * steering_vector(azimuth, n_elems, spacing_ratio)


def steering_matrix(azimuths, n_elems: int, spacing_ratio: float = DEFAULT_SPACING_RATIO) -> np.ndarray:
    """Columns a(θ_t) for every angle in `azimuths`."""
    return np.column_stack([steering_vector(theta, n_elems, spacing_ratio) for theta in azimuths])


def steering_derivative_matrix(azimuths, n_elems: int, spacing_ratio: float = DEFAULT_SPACING_RATIO) -> np.ndarray:
    return np.column_stack([steering_derivative(theta, n_elems, spacing_ratio) for theta in azimuths])


def rician_coefficients(geom: UserGeometry):
    """(LoS, NLoS) power coefficients β0·ρ/((1+ρ)d^α) and β0/((1+ρ)d^α)."""
    scale = geom.large_scale_gain / (1.0 + geom.rician_factor)
    return scale * geom.rician_factor, scale


def channel_covariance(geom: UserGeometry, array: ArrayConfig) -> ChannelStats:
    """
    Closed-form E{h hᴴ} of the Rician channel towards `geom`.

    Eavesdroppers use their own distance and Rician factor here.
    """
    los_coeff, nlos_coeff = rician_coefficients(geom)
    los_vector = steering_vector(geom.azimuth, array.n_tx, array.spacing_ratio)
    covariance = los_coeff * np.outer(los_vector, los_vector.conj()) + nlos_coeff * np.eye(array.n_tx)
    return ChannelStats(covariance=covariance, los_coeff=los_coeff, nlos_coeff=nlos_coeff, los_vector=los_vector)


def sample_channel(geom: UserGeometry, array: ArrayConfig, rng: np.random.Generator,
                   size: Optional[int] = None) -> np.ndarray:
    """
    Draw Rician channel realisations h = √(β0/d^α)(√(ρ/(1+ρ))·h̄ + √(1/(1+ρ))·h̃).

    h̃ is CN(0, I): real and imaginary parts each N(0, 1/2).

    Args:
        geom: User or eavesdropper geometry
        array: Transmit array
        rng: Caller-owned numpy Generator
        size: Number of realisations; None returns a single vector

    Returns:
        Shape (n_tx,) or (size, n_tx) complex array
    """
    shape = (array.n_tx,) if size is None else (int(size), array.n_tx)
    los_vector = steering_vector(geom.azimuth, array.n_tx, array.spacing_ratio)
    nlos = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    rho = geom.rician_factor
    return np.sqrt(geom.large_scale_gain) * (
        np.sqrt(rho / (1.0 + rho)) * los_vector + np.sqrt(1.0 / (1.0 + rho)) * nlos
    )


__all__ = [
    'ArrayConfig', 'UserGeometry', 'ChannelStats', 'steering_vector', 'steering_derivative',
    'steering_matrix', 'steering_derivative_matrix', 'rician_coefficients', 'channel_covariance',
    'sample_channel',
]
