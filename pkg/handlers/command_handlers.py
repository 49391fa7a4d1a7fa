"""
Handlers behind the CLI subcommands.

Each handler takes the parsed argparse namespace, writes its files under
--out-dir and returns the process exit code. Exceptions are left to the
caller, which routes them through handlers.error_handler.
"""
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List

from config.scenario_config import ScenarioConfig, load_scenario
from config.status import EXIT_NUMERICAL_FAILURE, EXIT_OK, STATUS_EXIT_CODES
from utils.errors import ConfigError
from utils.experiment_utils import (SweepSpec, beampattern, emit_beampattern, emit_manifest, emit_power_allocation,
                                    emit_results, emit_validation, run_sweep, validate_statistics)
from utils.scheme_utils import run_algorithm

logger = logging.getLogger(__name__)

VALIDATION_TOLERANCE = 0.02


def _split(text: str) -> List[str]:
    return [item.strip() for item in str(text).split(",") if item.strip()]


def _scenario(args) -> ScenarioConfig:
    scenario = load_scenario(args.config)
    if getattr(args, "seed", None) is not None:
        scenario = replace(scenario, seed=int(args.seed))
    return scenario


def _check_eavesdroppers(scenario: ScenarioConfig, algorithms, path) -> None:
    needs_eaves = [a for a in algorithms if a in ("alg1", "alg2")]
    if needs_eaves and not scenario.eavesdroppers:
        raise ConfigError(f"{', '.join(needs_eaves)} need at least one eavesdropper", str(path), "eavesdroppers")


def _out_dir(args) -> Path:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def _scheme(args, scenario: ScenarioConfig) -> str:
    return args.scheme or scenario.algorithm.selector.name


def handle_run(args) -> int:
    """Single algorithm/scheme run on the scenario file."""
    scenario = _scenario(args)
    _check_eavesdroppers(scenario, [args.algorithm], args.config)
    out_dir = _out_dir(args)
    result = run_algorithm(args.algorithm, _scheme(args, scenario), scenario.algorithm, scenario)
    emit_results(result, args.format, out_dir / f"run.{args.format}")
    emit_manifest(out_dir, scenario, sys.argv)
    logger.info(f"Run finished with status {result.status}")
    return STATUS_EXIT_CODES[result.status]


def handle_sweep(args) -> int:
    """Parameter sweep; individual failures are recorded in the table."""
    scenario = _scenario(args)
    algorithms = _split(args.algorithm)
    schemes = _split(args.scheme) if args.scheme else [scenario.algorithm.selector.name]
    _check_eavesdroppers(scenario, algorithms, args.config)
    try:
        values = [float(v) for v in _split(args.values)]
    except ValueError as e:
        raise ConfigError(f"--values must be a comma separated list of numbers: {e}") from e
    spec = SweepSpec(axis=args.axis, values=tuple(values), algorithms=tuple(algorithms), schemes=tuple(schemes))

    out_dir = _out_dir(args)
    rows = run_sweep(spec, scenario, workers=args.workers)
    emit_results(rows, args.format, out_dir / f"sweep_{args.axis}.{args.format}")
    emit_manifest(out_dir, scenario, sys.argv)

    codes = [STATUS_EXIT_CODES[row.status] for row in rows]
    if all(code != EXIT_OK for code in codes):
        return codes[0]
    return EXIT_OK


def handle_beampattern(args) -> int:
    """Solve once and write beampatterns and the power split of the result."""
    scenario = _scenario(args)
    _check_eavesdroppers(scenario, [args.algorithm], args.config)
    out_dir = _out_dir(args)
    scheme = _scheme(args, scenario)
    result = run_algorithm(args.algorithm, scheme, scenario.algorithm, scenario)
    emit_results(result, args.format, out_dir / f"run.{args.format}")
    if result.beamformers is not None:
        stem = f"{args.algorithm}_{result.scheme}"
        emit_beampattern(beampattern(result.beamformers, array=scenario.array),
                         out_dir / f"beampattern_{stem}.csv")
        emit_power_allocation(result.beamformers, out_dir / f"power_{stem}.csv")
    emit_manifest(out_dir, scenario, sys.argv)
    return STATUS_EXIT_CODES[result.status]


def handle_validate(args) -> int:
    """Monte-Carlo check of the closed-form channel expectations."""
    scenario = _scenario(args)
    out_dir = _out_dir(args)
    report = validate_statistics(scenario, samples=args.samples)
    emit_validation(report, args.format, out_dir / f"validation.{args.format}")
    emit_manifest(out_dir, scenario, sys.argv)
    if report.max_deviation > VALIDATION_TOLERANCE:
        logger.warning(f"Max deviation {report.max_deviation:.3%} exceeds {VALIDATION_TOLERANCE:.0%}")
        return EXIT_NUMERICAL_FAILURE
    return EXIT_OK


COMMANDS = {
    "run": handle_run,
    "sweep": handle_sweep,
    "beampattern": handle_beampattern,
    "validate": handle_validate,
}
