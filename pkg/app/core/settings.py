import math
import os
from pathlib import Path

# ===== SETTINGS =====

# ---- paths ----
# project root (folder that contains /templates, /app, /tests)
BASE_DIR = Path(__file__).resolve().parents[2]
TEMPLATES_DIR = BASE_DIR / "templates"

OUT_ENV_VAR = "TORSIONLAB_OUT"
DEFAULT_OUT_DIR = Path(os.environ.get(OUT_ENV_VAR, "torsionlab-out"))

SUMMARY_TEMPLATE = "summary.md.j2"
SUMMARY_FILE = "summary.md"

# ---- output formats ----
FLOAT_FORMAT = ".17g"  # 17 significant digits, bit-faithful round trips
SPECTRUM_CSV_HEADER = ("degree", "q_base", "q_fiber", "eigenvalue", "multiplicity")
REPORT_CSV_HEADER = ("point", "params", "observed", "predicted", "budget", "verdict", "note")

# ---- algebra limits ----
MAX_ALGEBRA_RANK = 14
MAX_DOUBLED_RANK = 7
DENSE_LIMIT = 2 ** 10

# ---- geometry defaults ----
DEFAULT_L = 2 * math.pi
DEFAULT_K = 2
DEFAULT_TAU = 1.0
DEFAULT_ALPHA = 0.0

# ---- discretization defaults ----
DEFAULT_GRID_POINTS = 48        # circle nodes for assembled operators
DEFAULT_FIBER_BASIS = 4         # Hermite levels per direction (energy cutoff = basis - 1)
DEFAULT_MAX_MODE = 400          # Fourier modes kept in closed-form base spectra
DEFAULT_FIBER_CUTOFF = 12       # oscillator energy levels kept in closed-form fiber spectra
MAX_ASSEMBLY_DIM = 4000

# ---- sweep grids ----
DEFAULT_EPSILONS = (1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125)
DEFAULT_TIMES = (0.1, 0.3, 1.0, 3.0)
DEFAULT_TAUS = (0.5, 1.0, 2.0)
DEFAULT_SIGMAS = (0.05, 0.1, 0.2, 0.5, 1.0)
DEFAULT_TS = (1.0, 2.0, 4.0, 8.0, 16.0)
DEFAULT_ALPHAS = (0.0, math.pi)

# ---- small-time expansion ----
FIT_WINDOW = (0.02, 0.5)        # in units of the base time scale min(1, (L/2pi)^2)
FIT_SAMPLES = 16
FIT_POWERS = (-0.5, 0.0, 0.5, 1.5, 2.5)
FIT_MAX_RESIDUAL = 1e-6
FIT_MAX_CONDITION = 1e12
CONSTANT_TERM_RATIO = 1e-3

# ---- contour quadrature ----
CONTOUR_X_MAX = 40.0
CONTOUR_NODES = 512
CONTOUR_MIN_NODES = 64

# ---- numerical zero ----
ZERO_EIGENVALUE = 1e-9
EXACT_ZERO = 1e-12
RANK_SEPARATION = 1e3

# ---- tolerances (overridable as tolerances.<name>) ----
TOLERANCES = {
    "algebra": 0.0,
    "matrix_identity": 1e-12,
    "discretization": 1e-3,
    "torsion_closed": 1e-6,
    "torsion_heat": 1e-3,
    "fit_relative": 1e-2,
    "constant_term": 1e-3,
    "correction": 1e-6,
    "main_theorem": 1e-3,
    "tau_spread": 2e-3,
    "gap_ratio": 0.9,
    "gap_slope": -0.05,
    "rate_low": 0.8,
    "rate_high": 1.2,
    "contour": 1e-8,
    "index_drift": 1e-8,
    "closedness_twisted": 1e-4,
    "closedness_untwisted": 1e-12,
    "rectangle": 1e-3,
    "decay_zero": 1e-12,
    "supertrace_limit": 1e-10,
}

# ---- exit codes ----
EXIT_OK = 0
EXIT_FAILED = 1
EXIT_DISAGREEMENT = 2
EXIT_USAGE = 64
