"""
Figure Data Script

Runs the convergence, beampattern, CRB-threshold, antenna, threshold and
minimum-power experiments on a scenario and writes their data tables.
Plotting is left to external tools.
"""
import argparse
import logging
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from config.scenario_config import REFERENCE_PATH, load_scenario  # noqa: E402
from handlers.error_handler import error_handler  # noqa: E402
from utils.experiment_utils import (SweepSpec, beampattern, emit_beampattern, emit_manifest,  # noqa: E402
                                    emit_power_allocation, emit_results, run_point, run_sweep)
from utils.fim_utils import SCHEMES  # noqa: E402
from utils.solver_utils import log_solver_status  # noqa: E402

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

ALL_SCHEMES = tuple(SCHEMES)


def convergence(scenario, out_dir: Path, workers: int):
    """Every algorithm for every scheme at the base scenario."""
    for algorithm in ("alg1", "alg2", "alg3"):
        rows = [run_point(f"{algorithm}-{scheme}-000", algorithm, scheme, None, scenario) for scheme in ALL_SCHEMES]
        emit_results(rows, "csv", out_dir / f"convergence_{algorithm}.csv")


def beampatterns(scenario, out_dir: Path, workers: int):
    """Scheme-2 beampatterns and the power split of every scheme under alg1 and alg3."""
    for algorithm in ("alg1", "alg3"):
        for scheme in ALL_SCHEMES:
            row = run_point(f"{algorithm}-{scheme}-000", algorithm, scheme, None, scenario)
            if row.result is None or row.result.beamformers is None:
                logger.warning(f"No beamformers for {algorithm}/{scheme}: {row.message}")
                continue
            bf = row.result.beamformers
            emit_power_allocation(bf, out_dir / f"power_{algorithm}_{scheme}.csv")
            if scheme == "scheme2":
                emit_beampattern(beampattern(bf, array=scenario.array), out_dir / f"beampattern_{algorithm}.csv")


def crb_sweep(scenario, out_dir: Path, workers: int):
    spec = SweepSpec("crb_threshold", (-75.0, -70.0, -65.0, -60.0), ("alg1", "alg2", "alg3"), ALL_SCHEMES)
    emit_results(run_sweep(spec, scenario, workers), "csv", out_dir / "sweep_crb_threshold.csv")


def antenna_sweep(scenario, out_dir: Path, workers: int):
    spec = SweepSpec("antennas", (8, 10, 12), ("alg1", "alg2", "alg3"), ALL_SCHEMES)
    emit_results(run_sweep(spec, scenario, workers), "csv", out_dir / "sweep_antennas.csv")


def threshold_sweeps(scenario, out_dir: Path, workers: int):
    """Secrecy threshold for alg1/alg2, and the QoS threshold for alg3 at P_max = 40 dBm."""
    spec = SweepSpec("secrecy_threshold", (0.5, 1.0, 1.5, 2.0), ("alg1", "alg2"), ALL_SCHEMES)
    emit_results(run_sweep(spec, scenario, workers), "csv", out_dir / "sweep_secrecy_threshold.csv")
    high_power = scenario.with_algorithm(p_max=10.0)
    spec = SweepSpec("qos_threshold", (2.0, 3.0, 4.0, 5.0), ("alg3",), ALL_SCHEMES)
    emit_results(run_sweep(spec, high_power, workers), "csv", out_dir / "sweep_qos_threshold.csv")


EXPERIMENTS = {
    "convergence": convergence,
    "beampattern": beampatterns,
    "crb": crb_sweep,
    "antennas": antenna_sweep,
    "thresholds": threshold_sweeps,
}


def reproduce_figures(config, out_dir, experiments, workers=None):
    """Run the selected experiments; returns the process exit code."""
    scenario = load_scenario(config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_solver_status()
    for name in experiments:
        logger.info(f"Running experiment: {name}")
        EXPERIMENTS[name](scenario, out_dir, workers or scenario.workers)
        logger.info(f"Experiment completed: {name}")
    emit_manifest(out_dir, scenario, sys.argv)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("--config", default=str(REFERENCE_PATH))
    parser.add_argument("--out-dir", default="figures")
    parser.add_argument("--experiments", default=",".join(EXPERIMENTS),
                        help=f"comma separated subset of {', '.join(EXPERIMENTS)}")
    parser.add_argument("--workers", type=int, default=None)
    args = parser.parse_args(argv)
    selected = [e.strip() for e in args.experiments.split(",") if e.strip()]
    unknown = [e for e in selected if e not in EXPERIMENTS]
    if unknown:
        parser.error(f"unknown experiments: {', '.join(unknown)}")
    try:
        return reproduce_figures(args.config, args.out_dir, selected, args.workers)
    except Exception as e:
        return error_handler(e, "reproduce_figures")


if __name__ == "__main__":
    sys.exit(main())
