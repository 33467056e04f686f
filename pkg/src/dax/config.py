"""
Baseline experiment constants and numerical thresholds.

Every default the library falls back to lives here. Change numbers in this ONE
file when the baseline configuration changes; every other module reads from here.
"""

# ---------------------------------------------------------------------------
# Lorenz-96 model
# ---------------------------------------------------------------------------

STATE_DIM: int = 40                 # n
FORCING: float = 8.0                # F
INTEGRATOR_DT: float = 0.01         # RK4 step
OBS_INTERVAL: float = 0.1           # t_obs, 10 RK4 steps
MIN_STATE_DIM: int = 4              # cyclic stencil needs i-2 .. i+1 distinct

SPINUP_TIME: float = 10.0           # time units integrated before x_true(0)
SPINUP_KICK: float = 0.01           # perturbation on component 0 of F·1

DIVERGENCE_THRESHOLD: float = 1e6   # any |component| above this is a blow-up

# ---------------------------------------------------------------------------
# Observations
# ---------------------------------------------------------------------------

OBS_DIM: int = 20                   # m, every second component
SIGMA_OBS: float = 1.5

# ---------------------------------------------------------------------------
# Ensemble / filter
# ---------------------------------------------------------------------------

ENSEMBLE_SIZE: int = 10             # N
WINDOW_LENGTH: int = 5              # L
NUM_WINDOWS: int = 50               # W
LAMBDA_INFL_STOCHASTIC: float = 1.05
LAMBDA_INFL_QPCA: float = 1.00
KAPPA: int = 1
SIGMA_INIT: float = 1.0

METHODS: list[str] = ["seq_enkf", "fourd_enkf", "qpca_endcf"]
METHOD_LABELS: dict[str, str] = {
    "seq_enkf": "Sequential EnKF",
    "fourd_enkf": "4D-EnKF",
    "qpca_endcf": "QPCA-EnDCF",
}
# CLI spellings accepted by `dax run --method`.
METHOD_ALIASES: dict[str, str] = {
    "seq-enkf": "seq_enkf",
    "4d-enkf": "fourd_enkf",
    "qpca-endcf": "qpca_endcf",
}

GAIN_INVERSES: list[str] = ["pinv", "tikhonov"]

# ---------------------------------------------------------------------------
# Experiment harness
# ---------------------------------------------------------------------------

NUM_TRIALS: int = 5
BASE_SEED: int = 42
OUTPUT_DIR: str = "results"
NUM_JOBS: int = 1
ENV_PREFIX: str = "DAX_"

# Substream tags mixed into SeedSequence([base_seed, trial, tag]).
STREAM_TAGS: dict[str, int] = {
    "truth_obs": 0,
    "init_ensemble": 1,
    "perturb_seq": 2,
    "perturb_4d": 3,
    "rank_ties": 4,
    "theory": 5,
}

# ---------------------------------------------------------------------------
# Numerical tolerances
# ---------------------------------------------------------------------------

SYMMETRY_TOL: float = 1e-10
EIG_RANK_RTOL: float = 1e-12        # eigenvalues <= rtol·λ_1 count as zero
PSD_RANK_RTOL: float = 1e-10

# ---------------------------------------------------------------------------
# Theory checks
# ---------------------------------------------------------------------------

MIN_REPS_UNBIASEDNESS: int = 1_000
MIN_REPS_MOMENT: int = 10_000
UNBIASEDNESS_SE_MULTIPLE: float = 4.0
MOMENT_REL_TOL: float = 0.05
FOURTH_MOMENT_RATIO_BAND: tuple[float, float] = (3.0, 5.3)
FROBENIUS_RATIO_BAND: tuple[float, float] = (1.6, 2.4)
PROJECTOR_RATIO_MIN: float = 2.0
SHRINKAGE_BATCH: int = 20            # small batch; the large batch is 4x
SHRINKAGE_EXPONENT_TOL: float = 0.2  # MC error ~ reps^-(0.5 +- tol)
BOUND_SLACK: float = 1e-10          # floating-point slack on deterministic bounds

# ---------------------------------------------------------------------------
# Output formatting
# ---------------------------------------------------------------------------

FLOAT_FORMAT: str = ".17g"

# ---------------------------------------------------------------------------
# check-theory defaults (CLI flags override)
# ---------------------------------------------------------------------------

THEORY_DEFAULTS: dict[str, dict[str, float]] = {
    "unbiasedness": {"d": 3, "N": 5, "reps": 10_000, "kappa": 1},
    "wishart": {"d": 2, "N": 5, "reps": 20_000, "kappa": 1},
    "eigen-perturbation": {"d": 6, "N": 10, "reps": 500, "kappa": 2},
    "perturbation-variance": {"d": 6, "N": 10, "reps": 20_000, "n": 4, "sigma": 1.5},
    "fourth-moment": {"d": 3, "N": 10, "reps": 20_000, "kappa": 1},
    "frobenius-rate": {"d": 3, "N": 10, "reps": 10_000, "kappa": 1},
    "windowed-noise": {"d": 10, "N": 10, "reps": 10_000, "sigma": 1.5},
    "projector-scaling": {"d": 4, "N": 20, "reps": 4_000, "kappa": 1, "ratio": 0.25},
    "truncation-bias": {"d": 6, "kappa": 2},
}
THEORY_CHECKS: list[str] = list(THEORY_DEFAULTS)
SPECTRUM_TOP: float = 2.0
SPECTRUM_RATIO: float = 0.5
