import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Solver configuration
SOLVER_VERBOSE = os.getenv("SOLVER_VERBOSE", "0").strip().lower() in ("1", "true", "yes")
SOLVER_CHAIN = [name.strip().upper() for name in os.getenv("ISAC_SOLVERS", "CLARABEL,SCS").split(",") if name.strip()]

# Array and sensing defaults (only d/λ is observable)
DEFAULT_SPACING_RATIO = 0.5
DEFAULT_SNAPSHOTS = 1024
DEFAULT_AMPLITUDE = 1.0 + 0.0j

# SCA / Dinkelbach defaults
DEFAULT_PENALTY_WEIGHT = 10.0
PENALTY_RAMP_FACTOR = 2.0
PENALTY_RAMP_CAP = 1e3
DEFAULT_TAU = 1e-3
DEFAULT_J_MAX = 30
# SCA steps per Dinkelbach factor in alg1/alg2
INNER_J_MAX = 40
# Floor (W) on the expansion-point power that surrogate objectives are divided by
PENALTY_POWER_FLOOR = 1e-12
SECURITY_EPSILON = 1e-3
RESTORATION_SLACK_TOL = 1e-6

# Initial point: shares of 0.9·P_max given to private, common and extra beams
INITIAL_POWER_SPLIT = {
    "private": 0.4,
    "common": 0.3,
    "extra": 0.3,
}
INITIAL_POWER_SCALE = 0.9

# Numerical contracts
ILL_CONDITION_LIMIT = 1e12
SOLVER_RESIDUAL_TOL = 1e-7
PSD_RESIDUAL_TOL = 1e-8
HERMITIAN_TOL = 1e-9
FEASIBILITY_TOL = 1e-6

# Beampattern output
BEAMPATTERN_FLOOR_DB = -120.0
BEAMPATTERN_STEP_DEG = 0.5

# Experiment defaults
DEFAULT_VALIDATION_SAMPLES = 100_000
MIN_VALIDATION_SAMPLES = 10_000
DEFAULT_WORKERS = 1

# Export all constants
__all__ = [
    'SOLVER_VERBOSE', 'SOLVER_CHAIN', 'DEFAULT_SPACING_RATIO', 'DEFAULT_SNAPSHOTS', 'DEFAULT_AMPLITUDE',
    'DEFAULT_PENALTY_WEIGHT', 'PENALTY_RAMP_FACTOR', 'PENALTY_RAMP_CAP', 'DEFAULT_TAU', 'DEFAULT_J_MAX',
    'INNER_J_MAX', 'PENALTY_POWER_FLOOR', 'SECURITY_EPSILON', 'RESTORATION_SLACK_TOL', 'INITIAL_POWER_SPLIT',
    'INITIAL_POWER_SCALE', 'ILL_CONDITION_LIMIT', 'SOLVER_RESIDUAL_TOL', 'PSD_RESIDUAL_TOL', 'HERMITIAN_TOL',
    'FEASIBILITY_TOL', 'BEAMPATTERN_FLOOR_DB', 'BEAMPATTERN_STEP_DEG', 'DEFAULT_VALIDATION_SAMPLES',
    'MIN_VALIDATION_SAMPLES', 'DEFAULT_WORKERS',
]
