import math

import numpy as np
import pytest

from config.scenario_config import REFERENCE_PATH, ScenarioConfig, emit_scenario
from utils.fim_utils import SCHEMES, SensingGeometry
from utils.geometry_utils import ArrayConfig, UserGeometry
from utils.scheme_utils import AlgorithmConfig

REF_GAIN = 1e-3       # -30 dB
NOISE = 1e-10         # -70 dBm


def receiver(distance, azimuth_deg, rician_factor=100.0):
    return UserGeometry(distance=distance, azimuth=math.radians(azimuth_deg), rician_factor=rician_factor,
                        pathloss_exponent=2.2, ref_gain=REF_GAIN)


def make_scenario(n_tx=4, eavesdroppers=True, **algorithm) -> ScenarioConfig:
    """Two users, one distant eavesdropper, one target, four antennas."""
    settings = dict(p_max=1.0, qos_threshold=1.0, secrecy_threshold=0.5, crb_threshold=1e-6, j_max=8,
                    selector=SCHEMES["scheme1"])
    settings.update(algorithm)
    return ScenarioConfig(
        users=(receiver(60.0, -45.0), receiver(80.0, 40.0)),
        eavesdroppers=(receiver(150.0, 0.0),) if eavesdroppers else (),
        sensing=SensingGeometry(target_azimuths=(math.radians(-20.0),), snapshots=64, sensing_noise_power=NOISE),
        array=ArrayConfig(n_tx=n_tx, n_rx=n_tx),
        user_noise_power=NOISE,
        eaves_noise_power=NOISE,
        algorithm=AlgorithmConfig(**settings),
        seed=7,
    )


@pytest.fixture
def toy_scenario():
    return make_scenario()


@pytest.fixture
def toy_config_path(tmp_path, toy_scenario):
    path = tmp_path / "toy.cfg"
    emit_scenario(toy_scenario, path)
    return path


@pytest.fixture
def reference_path():
    return REFERENCE_PATH


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_psd(rng, n, rank=None, scale=1.0):
    rank = rank or n
    A = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return scale * (A @ A.conj().T) / rank
