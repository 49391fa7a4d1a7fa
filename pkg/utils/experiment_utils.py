"""
Sweeps, beampatterns, Monte-Carlo validation and result files.

Data files never contain timestamps; the generation time goes to
manifest.json only, so identical inputs give byte-identical CSV/JSON.
"""
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime
from importlib import metadata
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pytz

from config.constants import (BEAMPATTERN_FLOOR_DB, BEAMPATTERN_STEP_DEG, DEFAULT_VALIDATION_SAMPLES,
                              MIN_VALIDATION_SAMPLES, SOLVER_CHAIN)
from config.status import STATUS_NUMERICAL_FAILURE
from utils.errors import InvalidInputError, OutputError
from utils.geometry_utils import ArrayConfig, sample_channel, channel_covariance, steering_matrix
from utils.metrics_utils import BeamformerSet, power_allocation, trace_product
from utils.scheme_utils import ALGORITHMS, RunResult, run_algorithm
from utils.solver_utils import fallback_operation

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["run_id", "algorithm", "scheme", "axis_value", "objective", "power_w", "min_rate",
                   "min_secrecy_rate", "crb_det", "iterations", "status"]
TRACE_COLUMNS = ["run_id", "iteration", "objective", "penalty", "dinkelbach"]
BEAMPATTERN_COLUMNS = ["matrix_id", "angle_deg", "gain_db"]
POWER_COLUMNS = ["matrix_id", "power_w", "share"]
VALIDATION_COLUMNS = ["receiver", "relative_deviation"]

# axis -> unit of the sweep values
SWEEP_AXES = {
    "crb_threshold": "dB",
    "antennas": "elements (N_t = N_r)",
    "qos_threshold": "bits/s/Hz",
    "secrecy_threshold": "bits/s/Hz",
    "p_max": "dBm",
}

MANIFEST_PACKAGES = ("numpy", "scipy", "cvxpy", "clarabel", "scs", "python-dotenv", "pytz")

_active_pool: Optional[ProcessPoolExecutor] = None


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    algorithms: tuple = ("alg1",)
    schemes: tuple = ("scheme1",)

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise InvalidInputError(f"Unknown sweep axis '{self.axis}', expected one of {sorted(SWEEP_AXES)}")
        values = tuple(float(v) for v in self.values)
        if not values:
            raise InvalidInputError("A sweep needs at least one value")
        steps = np.diff(values)
        if len(steps) and not (np.all(steps > 0) or np.all(steps < 0)):
            raise InvalidInputError(f"Sweep values must be strictly monotone, got {values}")
        for name in self.algorithms:
            if name not in ALGORITHMS:
                raise InvalidInputError(f"Unknown algorithm '{name}'")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        object.__setattr__(self, "schemes", tuple(self.schemes))


@dataclass
class SweepRow:
    run_id: str
    algorithm: str
    scheme: str
    axis_value: Optional[float]
    result: Optional[RunResult] = None
    status: str = STATUS_NUMERICAL_FAILURE
    message: str = ""

    def summary(self) -> Dict[str, object]:
        r = self.result
        metrics = r.metrics if r is not None else None
        return {
            "run_id": self.run_id,
            "algorithm": self.algorithm,
            "scheme": self.scheme,
            "axis_value": self.axis_value,
            "objective": r.objective if r is not None else math.nan,
            "power_w": metrics.total_power if metrics is not None else math.nan,
            "min_rate": metrics.min_rate if metrics is not None else math.nan,
            "min_secrecy_rate": metrics.min_secrecy_rate if metrics is not None else math.nan,
            "crb_det": r.crb_det if r is not None else math.nan,
            "iterations": r.iterations if r is not None else 0,
            "status": self.status,
        }

    def traces(self) -> List[Dict[str, object]]:
        if self.result is None:
            return []
        r = self.result
        return [
            {"run_id": self.run_id, "iteration": i + 1, "objective": obj, "penalty": pen, "dinkelbach": lam}
            for i, (obj, pen, lam) in enumerate(zip(r.objective_trace, r.penalty_trace, r.dinkelbach_trace))
        ]


@dataclass
class BeampatternTable:
    angles_deg: np.ndarray
    gains_db: Dict[str, np.ndarray] = field(default_factory=dict)

    def rows(self) -> Iterable[Dict[str, object]]:
        for matrix_id, gains in self.gains_db.items():
            for angle, gain in zip(self.angles_deg, gains):
                yield {"matrix_id": matrix_id, "angle_deg": float(angle), "gain_db": float(gain)}

    def peak_angles(self, matrix_id: str) -> List[float]:
        """Angles (degrees) of the interior local maxima of one matrix's pattern."""
        g = self.gains_db[matrix_id]
        interior = np.where((g[1:-1] > g[:-2]) & (g[1:-1] >= g[2:]))[0] + 1
        return [float(self.angles_deg[i]) for i in interior]


@dataclass
class ValidationReport:
    samples: int
    deviations: Dict[str, float]

    @property
    def max_deviation(self) -> float:
        return max(self.deviations.values(), default=0.0)


def run_id_for(algorithm: str, scheme: str, index: int) -> str:
    return f"{algorithm}-{scheme}-{index:03d}"


def apply_axis(scenario, axis: str, value: float):
    """Scenario with one sweep axis set; values use the units in SWEEP_AXES."""
    if axis == "crb_threshold":
        return scenario.with_algorithm(crb_threshold=10.0 ** (value / 10.0))
    if axis == "p_max":
        return scenario.with_algorithm(p_max=10.0 ** ((value - 30.0) / 10.0))
    if axis in ("qos_threshold", "secrecy_threshold"):
        return scenario.with_algorithm(**{axis: float(value)})
    if axis == "antennas":
        if value != int(value) or value < 1:
            raise InvalidInputError(f"Antenna count must be a positive integer, got {value}")
        array = replace(scenario.array, n_tx=int(value), n_rx=int(value))
        return replace(scenario, array=array)
    raise InvalidInputError(f"Unknown sweep axis '{axis}'")


def _failed_row(error: Exception, run_id: str, algorithm: str, scheme: str, axis_value) -> SweepRow:
    return SweepRow(run_id, algorithm, scheme, axis_value, None, STATUS_NUMERICAL_FAILURE, str(error))


@fallback_operation(fallback_result=lambda error, *task: _failed_row(error, *task[:4]))
def run_point(run_id: str, algorithm: str, scheme: str, axis_value, scenario) -> SweepRow:
    """One sweep cell; failures come back as a row instead of an exception."""
    result = run_algorithm(algorithm, scheme, scenario.algorithm, scenario)
    return SweepRow(run_id, algorithm, scheme, axis_value, result, result.status, result.message)


def shutdown_active_pool() -> None:
    """Cancel pending sweep points; used by the CLI signal handlers."""
    global _active_pool
    if _active_pool is not None:
        logger.info("Shutting down sweep worker pool")
        _active_pool.shutdown(wait=False, cancel_futures=True)
        _active_pool = None


def run_sweep(spec: SweepSpec, base, workers: Optional[int] = None) -> List[SweepRow]:
    """
    Run every (axis value × algorithm × scheme) combination.

    Args:
        spec: Axis, values, algorithms and schemes
        base: Scenario the axis is applied to
        workers: Process count; defaults to base.workers, 1 runs in-process

    Returns:
        Rows ordered by algorithm, scheme and axis value
    """
    global _active_pool
    tasks = []
    for algorithm in spec.algorithms:
        for scheme in spec.schemes:
            for i, value in enumerate(spec.values):
                tasks.append((run_id_for(algorithm, scheme, i), algorithm, scheme, value,
                              apply_axis(base, spec.axis, value)))
    workers = int(workers or getattr(base, "workers", 1) or 1)
    logger.info(f"Sweep over {spec.axis} ({SWEEP_AXES[spec.axis]}): {len(tasks)} runs on {workers} worker(s)")

    if workers == 1:
        rows = [run_point(*task) for task in tasks]
    else:
        _active_pool = ProcessPoolExecutor(max_workers=workers)
        try:
            futures = {task[0]: _active_pool.submit(run_point, *task) for task in tasks}
            by_id = {}
            for task in tasks:
                try:
                    by_id[task[0]] = futures[task[0]].result()
                except Exception as e:
                    logger.error(f"Sweep point {task[0]} did not complete: {e}")
                    by_id[task[0]] = _failed_row(e, *task[:4])
            rows = [by_id[task[0]] for task in tasks]
        finally:
            if _active_pool is not None:
                _active_pool.shutdown()
            _active_pool = None

    failed = sum(1 for row in rows if row.result is None)
    if failed:
        logger.warning(f"{failed} of {len(rows)} sweep points failed")
    return rows


def default_angle_grid() -> np.ndarray:
    return np.deg2rad(np.arange(-90.0, 90.0 + BEAMPATTERN_STEP_DEG / 2, BEAMPATTERN_STEP_DEG))


def beampattern(bf: BeamformerSet, angle_grid: Optional[Sequence[float]] = None,
                array: Optional[ArrayConfig] = None) -> BeampatternTable:
    """
    Transmit gain a(θ)ᴴ·W·a(θ) of every matrix, in dB floored at -120 dB.

    Args:
        bf: Beamformers; artificial noise is included when present
        angle_grid: Radians; defaults to -90°..90° in 0.5° steps
        array: Transmit array; a half-wavelength ULA of bf.n_tx when omitted
    """
    angles = default_angle_grid() if angle_grid is None else np.asarray(angle_grid, dtype=float)
    if angles.size == 0:
        raise InvalidInputError("Angle grid is empty")
    array = array or ArrayConfig(n_tx=bf.n_tx, n_rx=bf.n_tx)
    A = steering_matrix(angles, array.n_tx, array.spacing_ratio)
    floor = 10.0 ** (BEAMPATTERN_FLOOR_DB / 10.0)
    table = BeampatternTable(angles_deg=np.rad2deg(angles))
    for matrix_id, W in bf.matrices(include_an=True).items():
        gains = np.real(np.einsum("na,nm,ma->a", A.conj(), W, A))
        table.gains_db[matrix_id] = 10.0 * np.log10(np.maximum(gains, floor))
    return table


def validate_statistics(scenario, samples: int = DEFAULT_VALIDATION_SAMPLES,
                        rng: Optional[np.random.Generator] = None) -> ValidationReport:
    """
    Compare Monte-Carlo E{hᴴWh} with tr(E{hhᴴ}W) for every user and eavesdropper.

    W is a random PSD matrix per receiver. Deviations are relative to the
    closed form.
    """
    if int(samples) < MIN_VALIDATION_SAMPLES:
        raise InvalidInputError(f"samples must be >= {MIN_VALIDATION_SAMPLES}, got {samples}")
    rng = rng if rng is not None else np.random.default_rng(scenario.seed)
    n = scenario.array.n_tx
    receivers = [(f"user[{k}]", g) for k, g in enumerate(scenario.users)]
    receivers += [(f"eaves[{m}]", g) for m, g in enumerate(scenario.eavesdroppers)]

    deviations = {}
    for name, geom in receivers:
        A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        W = A @ A.conj().T / n
        h = sample_channel(geom, scenario.array, rng, size=int(samples))
        empirical = float(np.mean(np.real(np.einsum("sn,nm,sm->s", h.conj(), W, h))))
        closed_form = trace_product(channel_covariance(geom, scenario.array).covariance, W)
        deviations[name] = abs(empirical - closed_form) / abs(closed_form)
    report = ValidationReport(samples=int(samples), deviations=deviations)
    logger.info(f"Monte-Carlo check with {samples} samples: max relative deviation {report.max_deviation:.3%}")
    return report


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, columns: List[str], rows: Iterable[Dict[str, object]]) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_cell(row[c]) for c in columns])
    except OSError as e:
        raise OutputError(f"Cannot write {path}: {e}") from e


def _write_json(path: Path, payload) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise OutputError(f"Cannot write {path}: {e}") from e


def convergence_path(path) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}_convergence{path.suffix}")


def as_rows(results: Union[RunResult, SweepRow, Sequence[Union[RunResult, SweepRow]]]) -> List[SweepRow]:
    items = results if isinstance(results, (list, tuple)) else [results]
    rows = []
    for i, item in enumerate(items):
        if isinstance(item, RunResult):
            item = SweepRow(run_id_for(item.algorithm, item.scheme, i), item.algorithm, item.scheme, None,
                            item, item.status, item.message)
        rows.append(item)
    return rows


def emit_results(results, fmt: str, path) -> List[Path]:
    """
    Write run summaries (and convergence traces) as CSV or JSON.

    CSV writes the summary to `path` and the long-form traces next to it as
    `<stem>_convergence.csv`. JSON writes one document holding both.

    Returns:
        The paths written

    Raises:
        OutputError: a file cannot be written
    """
    rows = as_rows(results)
    path = Path(path)
    if fmt == "csv":
        trace_path = convergence_path(path)
        _write_csv(path, SUMMARY_COLUMNS, (row.summary() for row in rows))
        _write_csv(trace_path, TRACE_COLUMNS, (t for row in rows for t in row.traces()))
        written = [path, trace_path]
    elif fmt == "json":
        payload = {"runs": [
            {**row.summary(), "message": row.message, "traces": row.traces(),
             "result": row.result.to_dict() if row.result is not None else None}
            for row in rows
        ]}
        _write_json(path, payload)
        written = [path]
    else:
        raise InvalidInputError(f"Unknown format '{fmt}', expected csv or json")
    logger.info(f"Wrote {len(rows)} run(s) to {', '.join(str(p) for p in written)}")
    return written


def emit_beampattern(table: BeampatternTable, path) -> Path:
    path = Path(path)
    _write_csv(path, BEAMPATTERN_COLUMNS, table.rows())
    return path


def emit_power_allocation(bf: BeamformerSet, path) -> Path:
    """(matrix_id, power_w, share) rows; share is relative to the total including AN."""
    watts = power_allocation(bf)
    total = sum(watts.values())
    path = Path(path)
    _write_csv(path, POWER_COLUMNS, (
        {"matrix_id": k, "power_w": v, "share": v / total if total > 0 else 0.0} for k, v in watts.items()
    ))
    return path


def emit_validation(report: ValidationReport, fmt: str, path) -> Path:
    """Per-receiver deviations as CSV rows or one JSON document."""
    path = Path(path)
    rows = [{"receiver": name, "relative_deviation": value} for name, value in report.deviations.items()]
    if fmt == "json":
        _write_json(path, {"samples": report.samples, "max_deviation": report.max_deviation, "receivers": rows})
    elif fmt == "csv":
        _write_csv(path, VALIDATION_COLUMNS, rows)
    else:
        raise InvalidInputError(f"Unknown format '{fmt}', expected csv or json")
    return path


def _package_versions() -> Dict[str, Optional[str]]:
    versions = {}
    for name in MANIFEST_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


def scenario_echo(scenario) -> Dict[str, object]:
    """Scenario in linear units (W, rad) for the manifest."""
    alg = scenario.algorithm

    def receivers(geoms):
        return [
            {"distance_m": g.distance, "azimuth_rad": g.azimuth, "rician_factor": g.rician_factor,
             "pathloss_exponent": g.pathloss_exponent, "ref_gain": g.ref_gain} for g in geoms
        ]

    return {
        "users": receivers(scenario.users),
        "eavesdroppers": receivers(scenario.eavesdroppers),
        "array": {"n_tx": scenario.array.n_tx, "n_rx": scenario.array.n_rx,
                  "spacing_ratio": scenario.array.spacing_ratio},
        "sensing": {"target_azimuths_rad": list(scenario.sensing.target_azimuths),
                    "amplitudes": [[b.real, b.imag] for b in scenario.sensing.amplitudes],
                    "snapshots": scenario.sensing.snapshots,
                    "noise_power_w": scenario.sensing.sensing_noise_power},
        "user_noise_power_w": scenario.user_noise_power,
        "eaves_noise_power_w": scenario.eaves_noise_power,
        "algorithm": {"p_max_w": alg.p_max, "qos_threshold": alg.qos_threshold,
                      "secrecy_threshold": alg.secrecy_threshold, "crb_threshold": alg.crb_threshold,
                      "penalty_weight": alg.penalty_weight, "penalty_ramp": alg.penalty_ramp,
                      "tau": alg.tau, "j_max": alg.j_max, "scheme": alg.selector.name},
        "seed": scenario.seed,
        "workers": scenario.workers,
    }


def emit_manifest(out_dir, scenario, argv: Optional[Sequence[str]] = None) -> Path:
    """manifest.json: command line, scenario echo, solver chain, versions and a UTC timestamp."""
    path = Path(out_dir) / "manifest.json"
    _write_json(path, {
        "generated_at": datetime.now(pytz.utc).isoformat(),
        "argv": list(argv if argv is not None else sys.argv),
        "scenario": scenario_echo(scenario),
        "solver_chain": list(SOLVER_CHAIN),
        "packages": _package_versions(),
    })
    return path


__all__ = [
    'SUMMARY_COLUMNS', 'TRACE_COLUMNS', 'BEAMPATTERN_COLUMNS', 'POWER_COLUMNS', 'SWEEP_AXES', 'SweepSpec',
    'SweepRow', 'BeampatternTable', 'ValidationReport', 'run_id_for', 'apply_axis', 'run_point', 'run_sweep',
    'shutdown_active_pool', 'default_angle_grid', 'beampattern', 'validate_statistics', 'emit_results',
    'emit_beampattern', 'emit_power_allocation', 'emit_validation', 'VALIDATION_COLUMNS', 'emit_manifest',
    'scenario_echo', 'convergence_path', 'as_rows',
]
