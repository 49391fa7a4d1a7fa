"""
Scenario files

INI-style text parsed with configparser. Every key lives in a fixed section;
unknown sections or keys are rejected with the line they appear on. Values may
carry a unit suffix which is converted at load time:

    m            distance in metres
    deg | rad    angles (angles must carry one of the two)
    dB           power ratio, converted to linear
    dBm | W      absolute power, converted to watts

Lists are comma separated. The shared channel keys in [channel] apply to every
user and eavesdropper; `eaves_rician_factor` defaults to `rician_factor`.
"""
import configparser
import logging
import math
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, Optional, Tuple

from config.constants import DEFAULT_SNAPSHOTS, DEFAULT_SPACING_RATIO, DEFAULT_WORKERS
from utils.errors import ConfigError, IsacError
from utils.fim_utils import SensingGeometry, get_scheme
from utils.geometry_utils import ArrayConfig, UserGeometry
from utils.scheme_utils import AlgorithmConfig

logger = logging.getLogger(__name__)

REFERENCE_PATH = Path(__file__).parent / "reference.cfg"

_QUANTITY = re.compile(r"^\s*([-+0-9.eEinfINFa]+)\s*([A-Za-z]*)\s*$")


@dataclass(frozen=True)
class ScenarioConfig:
    users: Tuple[UserGeometry, ...]
    eavesdroppers: Tuple[UserGeometry, ...]
    sensing: SensingGeometry
    array: ArrayConfig
    user_noise_power: float
    eaves_noise_power: float
    algorithm: AlgorithmConfig
    seed: int = 0
    workers: int = DEFAULT_WORKERS

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_eaves(self) -> int:
        return len(self.eavesdroppers)

    def with_algorithm(self, **changes) -> "ScenarioConfig":
        return replace(self, algorithm=replace(self.algorithm, **changes))


def _number(text: str) -> Tuple[float, str]:
    match = _QUANTITY.match(text)
    if not match:
        raise ValueError(f"cannot read '{text}' as a number with an optional unit")
    return float(match.group(1)), match.group(2)


def _distance(text: str) -> float:
    value, unit = _number(text)
    if unit not in ("", "m"):
        raise ValueError(f"unit '{unit}' is not a distance")
    return value


def _angle(text: str) -> float:
    value, unit = _number(text)
    if unit == "deg":
        return math.radians(value)
    if unit == "rad":
        return value
    raise ValueError(f"angle '{text}' needs a deg or rad suffix")


def _ratio(text: str) -> float:
    value, unit = _number(text)
    if unit == "dB":
        return 10.0 ** (value / 10.0)
    if unit == "":
        return value
    raise ValueError(f"unit '{unit}' is not a ratio (use dB or a bare number)")


def _power(text: str) -> float:
    value, unit = _number(text)
    if unit == "dBm":
        return 10.0 ** ((value - 30.0) / 10.0)
    if unit == "dB":
        return 10.0 ** (value / 10.0)
    if unit in ("W", ""):
        return value
    raise ValueError(f"unit '{unit}' is not a power (use dBm, dB or W)")


def _plain(text: str) -> float:
    value, unit = _number(text)
    if unit:
        raise ValueError(f"'{text}' takes no unit")
    return value


def _integer(text: str) -> int:
    value = _plain(text)
    if not math.isfinite(value) or value != int(value):
        raise ValueError(f"'{text}' is not an integer")
    return int(value)


def _boolean(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"'{text}' is not a boolean")


def _listed(parse: Callable[[str], object]) -> Callable[[str], tuple]:
    def parse_list(text: str) -> tuple:
        return tuple(parse(item) for item in text.split(",") if item.strip())
    return parse_list


def _complex(text: str) -> complex:
    return complex(text.strip().replace(" ", ""))


# section -> key -> (parser, default); a default of None means required
SCHEMA: Dict[str, Dict[str, Tuple[Callable[[str], object], object]]] = {
    "array": {
        "n_tx": (_integer, None),
        "n_rx": (_integer, None),
        "spacing_ratio": (_plain, DEFAULT_SPACING_RATIO),
    },
    "channel": {
        "ref_gain": (_ratio, None),
        "pathloss_exponent": (_plain, None),
        "rician_factor": (_ratio, None),
        "eaves_rician_factor": (_ratio, "inherit"),
        "noise_power": (_power, None),
        "eaves_noise_power": (_power, "inherit"),
    },
    "users": {
        "distances": (_listed(_distance), None),
        "azimuths": (_listed(_angle), None),
    },
    "eavesdroppers": {
        "distances": (_listed(_distance), ()),
        "azimuths": (_listed(_angle), ()),
    },
    "sensing": {
        "target_azimuths": (_listed(_angle), None),
        "amplitudes": (_listed(_complex), ()),
        "snapshots": (_integer, DEFAULT_SNAPSHOTS),
        "noise_power": (_power, "inherit"),
    },
    "algorithm": {
        "p_max": (_power, None),
        "qos_threshold": (_plain, None),
        "secrecy_threshold": (_plain, None),
        "crb_threshold": (_ratio, None),
        "penalty_weight": (_plain, "default"),
        "penalty_ramp": (_boolean, False),
        "tau": (_plain, "default"),
        "j_max": (_integer, "default"),
        "scheme": (str.strip, "scheme1"),
    },
    "run": {
        "seed": (_integer, 0),
        "workers": (_integer, DEFAULT_WORKERS),
    },
}


def _line_index(text: str) -> Dict[Tuple[Optional[str], Optional[str]], int]:
    """1-based line numbers of section headers and keys."""
    index: Dict[Tuple[Optional[str], Optional[str]], int] = {}
    section = None
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped[0] in "#;":
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            index.setdefault((section, None), number)
        elif "=" in stripped:
            index.setdefault((section, stripped.split("=", 1)[0].strip()), number)
    return index


def _read_values(parser: configparser.ConfigParser, path: str, lines) -> Dict[str, Dict[str, object]]:
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section, expected one of {sorted(SCHEMA)}", path, section,
                              line=lines.get((section, None)))
        for key in parser[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key, expected one of {sorted(SCHEMA[section])}", path, section, key,
                                  lines.get((section, key)))

    values: Dict[str, Dict[str, object]] = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (parse, default) in keys.items():
            if parser.has_option(section, key):
                try:
                    values[section][key] = parse(parser.get(section, key))
                except ValueError as e:
                    raise ConfigError(str(e), path, section, key, lines.get((section, key))) from e
            elif default is None:
                raise ConfigError("missing required key", path, section, key, lines.get((section, None)))
            else:
                values[section][key] = default
    return values


def _geometries(distances, azimuths, rician_factor: float, channel: Dict[str, object], section: str, path: str,
                lines) -> Tuple[UserGeometry, ...]:
    if len(distances) != len(azimuths):
        raise ConfigError(f"{len(distances)} distances but {len(azimuths)} azimuths", path, section,
                          line=lines.get((section, None)))
    return tuple(
        UserGeometry(distance=d, azimuth=theta, rician_factor=rician_factor,
                     pathloss_exponent=channel["pathloss_exponent"], ref_gain=channel["ref_gain"])
        for d, theta in zip(distances, azimuths)
    )


def _algorithm_config(values: Dict[str, object]) -> AlgorithmConfig:
    optional = {key: values[key] for key in ("penalty_weight", "tau", "j_max") if values[key] != "default"}
    return AlgorithmConfig(
        p_max=values["p_max"],
        qos_threshold=values["qos_threshold"],
        secrecy_threshold=values["secrecy_threshold"],
        crb_threshold=values["crb_threshold"],
        penalty_ramp=values["penalty_ramp"],
        selector=get_scheme(values["scheme"]),
        **optional,
    )


def load_scenario(path) -> ScenarioConfig:
    """
    Read and validate a scenario file.

    Raises:
        ConfigError: unreadable file, syntax error, unknown or missing keys,
            bad units or values that fail validation
    """
    path = str(path)
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read scenario file: {e}", path) from e

    lines = _line_index(text)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=path)
    except configparser.Error as e:
        raise ConfigError(f"syntax error: {e}", path, line=getattr(e, "lineno", None)) from e

    values = _read_values(parser, path, lines)
    channel, sensing, run = values["channel"], values["sensing"], values["run"]
    noise = channel["noise_power"]
    eaves_noise = noise if channel["eaves_noise_power"] == "inherit" else channel["eaves_noise_power"]
    eaves_rician = (channel["rician_factor"] if channel["eaves_rician_factor"] == "inherit"
                    else channel["eaves_rician_factor"])

    section = None
    try:
        section = "users"
        users = _geometries(values["users"]["distances"], values["users"]["azimuths"], channel["rician_factor"],
                            channel, section, path, lines)
        if not users:
            raise ConfigError("at least one user is required", path, section, "distances",
                              lines.get((section, "distances")))
        section = "eavesdroppers"
        eaves = _geometries(values["eavesdroppers"]["distances"], values["eavesdroppers"]["azimuths"],
                            eaves_rician, channel, section, path, lines)
        section = "sensing"
        sensing_geometry = SensingGeometry(
            target_azimuths=sensing["target_azimuths"],
            amplitudes=sensing["amplitudes"],
            snapshots=sensing["snapshots"],
            sensing_noise_power=noise if sensing["noise_power"] == "inherit" else sensing["noise_power"],
        )
        section = "array"
        array = ArrayConfig(**values["array"])
        section = "algorithm"
        algorithm = _algorithm_config(values["algorithm"])
        section = "run"
        if run["workers"] < 1:
            raise ConfigError("workers must be >= 1", path, section, "workers", lines.get((section, "workers")))
        scenario = ScenarioConfig(users=users, eavesdroppers=eaves, sensing=sensing_geometry, array=array,
                                  user_noise_power=noise, eaves_noise_power=eaves_noise, algorithm=algorithm,
                                  seed=run["seed"], workers=run["workers"])
    except ConfigError:
        raise
    except (IsacError, ValueError) as e:
        raise ConfigError(str(e), path, section, line=lines.get((section, None))) from e

    logger.info(f"Loaded scenario {path}: K={scenario.n_users}, M={scenario.n_eaves}, "
                f"T={sensing_geometry.n_targets}, N_t={array.n_tx}, N_r={array.n_rx}")
    return scenario


def _floats(values) -> str:
    return ", ".join(repr(float(v)) for v in values)


def _shared(geoms, attribute: str):
    found = {getattr(g, attribute) for g in geoms}
    if len(found) > 1:
        raise ConfigError(f"{attribute} differs between receivers and cannot be written to a scenario file")
    return found.pop() if found else None


def emit_scenario(scenario: ScenarioConfig, path) -> None:
    """Write `scenario` in linear units (W, rad) so that load_scenario returns an equal config."""
    everyone = scenario.users + scenario.eavesdroppers
    alg = scenario.algorithm
    parser = configparser.ConfigParser(interpolation=None)
    parser["array"] = {
        "n_tx": str(scenario.array.n_tx),
        "n_rx": str(scenario.array.n_rx),
        "spacing_ratio": repr(float(scenario.array.spacing_ratio)),
    }
    channel = {
        "ref_gain": repr(float(_shared(everyone, "ref_gain"))),
        "pathloss_exponent": repr(float(_shared(everyone, "pathloss_exponent"))),
        "rician_factor": repr(float(_shared(scenario.users, "rician_factor"))),
        "noise_power": f"{scenario.user_noise_power!r} W",
        "eaves_noise_power": f"{scenario.eaves_noise_power!r} W",
    }
    if scenario.eavesdroppers:
        channel["eaves_rician_factor"] = repr(float(_shared(scenario.eavesdroppers, "rician_factor")))
    parser["channel"] = channel
    for section, geoms in (("users", scenario.users), ("eavesdroppers", scenario.eavesdroppers)):
        parser[section] = {
            "distances": _floats(g.distance for g in geoms),
            "azimuths": ", ".join(f"{float(g.azimuth)!r} rad" for g in geoms),
        }
    parser["sensing"] = {
        "target_azimuths": ", ".join(f"{float(t)!r} rad" for t in scenario.sensing.target_azimuths),
        "amplitudes": ", ".join(repr(complex(b)) for b in scenario.sensing.amplitudes),
        "snapshots": str(scenario.sensing.snapshots),
        "noise_power": f"{scenario.sensing.sensing_noise_power!r} W",
    }
    parser["algorithm"] = {
        "p_max": f"{alg.p_max!r} W",
        "qos_threshold": repr(float(alg.qos_threshold)),
        "secrecy_threshold": repr(float(alg.secrecy_threshold)),
        "crb_threshold": repr(float(alg.crb_threshold)),
        "penalty_weight": repr(float(alg.penalty_weight)),
        "penalty_ramp": "true" if alg.penalty_ramp else "false",
        "tau": repr(float(alg.tau)),
        "j_max": str(alg.j_max),
        "scheme": alg.selector.name,
    }
    parser["run"] = {"seed": str(scenario.seed), "workers": str(scenario.workers)}
    with open(path, "w") as f:
        parser.write(f)
    logger.info(f"Scenario written to {path}")


def default_scenario() -> ScenarioConfig:
    return load_scenario(REFERENCE_PATH)


__all__ = ['ScenarioConfig', 'SCHEMA', 'REFERENCE_PATH', 'load_scenario', 'emit_scenario', 'default_scenario']
