"""
Settings - Package-wide constants and runtime knobs
"""

VERSION = "1.0.0"

REPORT_SCHEMA = "varcz-report/1"
SPACE_SCHEMA = "varcz-space/1"
SYSTEM_SCHEMA = "varcz-cubes/1"
FAMILY_SCHEMA = "varcz-sparse/1"
CONFIG_SCHEMA = "varcz-config/1"

# Budgets, checked before compute
POINT_BUDGET = 100_000
KERNEL_EVALUATION_BUDGET = 100_000_000
MATRIX_ENTRY_BUDGET = 4_000_000

# Exact pairwise diameters up to this many members, double sweep above
EXACT_DIAMETER_LIMIT = 4096

# Spaces at most this large keep a dense distance matrix
DENSE_DISTANCE_LIMIT = 2048

# Fixed anisotropy of the Heisenberg gauge
HEISENBERG_TAU = 16.0

VARIATION_LENGTH_CAP = 20_000
ORACLE_LENGTH_CAP = 20

# Relative slack for distance comparisons on lattices
DISTANCE_RTOL = 1e-12

MODULE_VERSIONS = {
    'space': '1.0',
    'dyadic': '1.0',
    'variation': '1.0',
    'martingale': '1.0',
    'operators': '1.0',
    'sparse': '1.0',
    'weights': '1.0',
    'harness': '1.0',
}

# Set from --threads; 1 means sequential
threads = 1


def set_threads(count: int) -> None:
    """Set the worker count used by batch evaluation."""
    global threads
    threads = max(1, int(count))
