import argparse
import logging
import signal
import sys

from config.constants import DEFAULT_VALIDATION_SAMPLES, SOLVER_VERBOSE
from config.scenario_config import REFERENCE_PATH
from config.status import EXIT_CONFIG_ERROR
from handlers.command_handlers import COMMANDS
from handlers.error_handler import error_handler
from utils.experiment_utils import SWEEP_AXES, shutdown_active_pool
from utils.fim_utils import SCHEMES
from utils.scheme_utils import ALGORITHMS
from utils.solver_utils import log_solver_status

# Setup logging
logging.basicConfig(
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    level=logging.DEBUG if SOLVER_VERBOSE else logging.INFO
)
logger = logging.getLogger(__name__)


# Set up signal handlers for graceful shutdown
def signal_handler(sig, frame):
    """Handle shutdown signals by stopping the sweep workers"""
    signal_name = signal.Signals(sig).name if hasattr(signal, 'Signals') else f"Signal {sig}"
    logger.info(f"{signal_name} received. Cleaning up resources...")
    shutdown_active_pool()
    sys.exit(0)


def install_signal_handlers():
    signal.signal(signal.SIGINT, signal_handler)   # Ctrl+C
    signal.signal(signal.SIGTERM, signal_handler)  # Termination signal
    if hasattr(signal, 'SIGHUP'):
        signal.signal(signal.SIGHUP, signal_handler)  # Terminal closed
    if hasattr(signal, 'SIGQUIT'):
        signal.signal(signal.SIGQUIT, signal_handler)  # Quit signal


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isac-beamforming",
        description="Secure rate-splitting ISAC beamforming: runs, sweeps, beampatterns and channel checks.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=str(REFERENCE_PATH), help="scenario file (default: shipped reference.cfg)")
    common.add_argument("--out-dir", default="results", help="directory for result files")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")

    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="solve one scenario")
    run.add_argument("--algorithm", choices=ALGORITHMS, default="alg1")
    run.add_argument("--scheme", choices=sorted(SCHEMES), default=None)

    sweep = sub.add_parser("sweep", parents=[common], help="sweep one parameter")
    sweep.add_argument("--algorithm", default="alg1", help="comma separated algorithms")
    sweep.add_argument("--scheme", default=None, help="comma separated schemes")
    sweep.add_argument("--axis", choices=sorted(SWEEP_AXES), required=True)
    sweep.add_argument("--values", required=True,
                       help="comma separated, strictly monotone; " +
                            "; ".join(f"{axis} in {unit}" for axis, unit in SWEEP_AXES.items()))
    sweep.add_argument("--workers", type=int, default=None, help="worker processes (default from scenario)")

    pattern = sub.add_parser("beampattern", parents=[common], help="solve and write beampatterns")
    pattern.add_argument("--algorithm", choices=ALGORITHMS, default="alg1")
    pattern.add_argument("--scheme", choices=sorted(SCHEMES), default=None)

    validate = sub.add_parser("validate", parents=[common], help="Monte-Carlo check of channel statistics")
    validate.add_argument("--samples", type=int, default=DEFAULT_VALIDATION_SAMPLES)
    return parser


def main(argv=None) -> int:
    """Parse the command line and dispatch to a command handler."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG_ERROR if e.code else 0

    install_signal_handlers()
    log_solver_status()
    logger.info(f"Running '{args.command}' with scenario {args.config}")
    try:
        return COMMANDS[args.command](args)
    except Exception as e:
        return error_handler(e, args.command)


if __name__ == '__main__':
    sys.exit(main())
