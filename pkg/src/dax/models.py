"""
Data models for dax.

Dataclasses for model parameters, observation windows, ensemble statistics,
spectral truncations, assimilation runs, and diagnostic records.

Ensembles and states are plain numpy arrays: a StateVector has shape (n,), an
EnsembleMatrix has shape (n, N) with one member per column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import config
from .errors import InvalidInputError

StateVector = np.ndarray
EnsembleMatrix = np.ndarray


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymEig:
    """Eigenpairs of a symmetric matrix in nonincreasing eigenvalue order.

    Attributes:
        values: Eigenvalues, length p, descending.
        vectors: p x p orthonormal matrix; column i pairs with values[i].
    """
    values: np.ndarray
    vectors: np.ndarray


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """Lorenz-96 configuration.

    Attributes:
        n: State dimension.
        forcing: Constant forcing F.
        dt: RK4 step.
        t_obs: Time between observations; an integer multiple of dt.
    """
    n: int = config.STATE_DIM
    forcing: float = config.FORCING
    dt: float = config.INTEGRATOR_DT
    t_obs: float = config.OBS_INTERVAL

    def __post_init__(self) -> None:
        if self.n < config.MIN_STATE_DIM:
            raise InvalidInputError(f"n must be >= {config.MIN_STATE_DIM}, got {self.n}")
        if not self.dt > 0:
            raise InvalidInputError(f"dt must be > 0, got {self.dt}")
        ratio = self.t_obs / self.dt
        if round(ratio) < 1 or abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise InvalidInputError(
                f"t_obs={self.t_obs} is not a positive integer multiple of dt={self.dt}"
            )

    @property
    def steps_per_obs(self) -> int:
        """Number of RK4 steps between consecutive observation times."""
        return int(round(self.t_obs / self.dt))


@dataclass(frozen=True)
class TangentLinearOperator:
    """Cumulative tangent-linear propagators M_1..M_L from the window start.

    Attributes:
        matrices: L matrices of shape (n, n); M_0 = I is implied.
    """
    matrices: list[np.ndarray]

    @property
    def L(self) -> int:
        return len(self.matrices)


# ---------------------------------------------------------------------------
# Observations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ObsOperator:
    """Linear selector H picking m of the n state components.

    Attributes:
        n: State dimension.
        selected_indices: Strictly increasing 0-based state indices.
    """
    n: int
    selected_indices: np.ndarray

    def __post_init__(self) -> None:
        indices = np.asarray(self.selected_indices, dtype=int)
        if indices.ndim != 1 or indices.size == 0:
            raise InvalidInputError("selected_indices must be a nonempty 1-D sequence")
        if np.any(np.diff(indices) <= 0):
            raise InvalidInputError("selected_indices must be strictly increasing")
        if indices[0] < 0 or indices[-1] >= self.n:
            raise InvalidInputError(f"selected_indices must lie in [0, {self.n})")
        object.__setattr__(self, "selected_indices", indices)

    @property
    def m(self) -> int:
        return int(self.selected_indices.size)

    @classmethod
    def regular(cls, n: int, m: int) -> ObsOperator:
        """Evenly spaced selector; (40, 20) gives indices 0, 2, ..., 38."""
        if not 1 <= m <= n:
            raise InvalidInputError(f"need 1 <= m <= n, got m={m}, n={n}")
        indices = np.floor(np.arange(m) * (n / m) + 1e-9).astype(int)
        return cls(n=n, selected_indices=indices)

    def matrix(self) -> np.ndarray:
        """Dense m x n representation of H."""
        h = np.zeros((self.m, self.n))
        h[np.arange(self.m), self.selected_indices] = 1.0
        return h


@dataclass(frozen=True)
class ObservationWindow:
    """L consecutive observations stacked into one vector.

    Attributes:
        per_time: L vectors z_k of length m, in time order.
        stacked: z^(w), length d = mL.
        r_stacked: d x d block-diagonal error covariance R^(L).
        sigma_obs: Scalar noise std when R = sigma^2 I, else None.
        k_start: Global index k_0(w) of the window-initial time.
    """
    per_time: list[np.ndarray]
    stacked: np.ndarray
    r_stacked: np.ndarray
    sigma_obs: float | None = None
    k_start: int = 0

    @property
    def L(self) -> int:
        return len(self.per_time)

    @property
    def m(self) -> int:
        return int(self.per_time[0].size)

    @property
    def d(self) -> int:
        return int(self.stacked.size)

    @property
    def k_end(self) -> int:
        return self.k_start + self.L

    @property
    def is_scalar(self) -> bool:
        return self.sigma_obs is not None


# ---------------------------------------------------------------------------
# Ensemble statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleStats:
    """Mean, anomalies and sample covariance of an n x N ensemble."""
    mean: np.ndarray
    anomalies: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True)
class DcGain:
    """Empirical data-consistent gain K = P_xz · P_zz^+ and its ingredients."""
    p_xz: np.ndarray
    p_zz: np.ndarray
    gain: np.ndarray


# ---------------------------------------------------------------------------
# Spectral truncation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResidualSet:
    """Whitened residuals E, their mean, centered copy and covariance C_E."""
    e_matrix: np.ndarray
    e_bar: np.ndarray
    centered: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class TruncatedBasis:
    """Leading kappa eigenvectors of C_E and the projector they span.

    Attributes:
        kappa: Retained rank after clamping to the numerical rank.
        vectors: d x kappa orthonormal columns.
        values: kappa leading eigenvalues, nonincreasing, >= 0.
        projector: d x d orthogonal projector V V^T.
        requested_kappa: Rank asked for before clamping.
        all_values: Full clamped spectrum of C_E (descending).
    """
    kappa: int
    vectors: np.ndarray
    values: np.ndarray
    projector: np.ndarray
    requested_kappa: int
    all_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def clamped(self) -> bool:
        return self.kappa < self.requested_kappa


# ---------------------------------------------------------------------------
# Filters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FilterConfig:
    """Configuration shared by the three assimilation methods.

    Attributes:
        method: "seq_enkf", "fourd_enkf" or "qpca_endcf".
        n, m, N, L, W: State/observation dimensions, ensemble size, window
            length and number of windows.
        sigma_obs: Observation noise std.
        lambda_infl: Post-update multiplicative inflation (stochastic methods).
        kappa: QPCA truncation rank.
        model: Lorenz-96 parameters.
        seed: Seed recorded with the run.
        gain_inverse: "pinv" or "tikhonov" for the QPCA gain.
        tikhonov_eps: Ridge added to P_zz when gain_inverse is "tikhonov".
    """
    method: str = "qpca_endcf"
    n: int = config.STATE_DIM
    m: int = config.OBS_DIM
    N: int = config.ENSEMBLE_SIZE
    L: int = config.WINDOW_LENGTH
    W: int = config.NUM_WINDOWS
    sigma_obs: float = config.SIGMA_OBS
    lambda_infl: float = config.LAMBDA_INFL_QPCA
    kappa: int = config.KAPPA
    model: ModelParams = field(default_factory=ModelParams)
    seed: int = config.BASE_SEED
    gain_inverse: str = "pinv"
    tikhonov_eps: float | None = None

    def __post_init__(self) -> None:
        if self.method not in config.METHODS:
            raise InvalidInputError(f"unknown method '{self.method}'")
        if self.model.n != self.n:
            raise InvalidInputError(f"model.n={self.model.n} does not match n={self.n}")
        if not 1 <= self.m <= self.n:
            raise InvalidInputError(f"need 1 <= m <= n, got m={self.m}")
        if self.N < 2:
            raise InvalidInputError(f"ensemble size N must be >= 2, got {self.N}")
        if self.L < 1 or self.W < 1:
            raise InvalidInputError("L and W must be >= 1")
        if not self.sigma_obs > 0:
            raise InvalidInputError(f"sigma_obs must be > 0, got {self.sigma_obs}")
        if self.lambda_infl < 1.0:
            raise InvalidInputError(f"lambda_infl must be >= 1, got {self.lambda_infl}")
        if self.method == "qpca_endcf" and not 1 <= self.kappa <= self.max_kappa:
            raise InvalidInputError(
                f"kappa must lie in [1, {self.max_kappa}], got {self.kappa}"
            )
        if self.gain_inverse not in config.GAIN_INVERSES:
            raise InvalidInputError(f"gain_inverse must be one of {config.GAIN_INVERSES}")
        if self.gain_inverse == "tikhonov" and not (self.tikhonov_eps or 0) > 0:
            raise InvalidInputError("tikhonov gain requires tikhonov_eps > 0")

    @property
    def K(self) -> int:
        """Total number of observation times W·L."""
        return self.W * self.L

    @property
    def d(self) -> int:
        """Stacked observation dimension mL."""
        return self.m * self.L

    @property
    def max_kappa(self) -> int:
        return min(self.d, self.N - 1)

    @property
    def is_windowed(self) -> bool:
        return self.method != "seq_enkf"

    def obs_operator(self) -> ObsOperator:
        return ObsOperator.regular(self.n, self.m)

    def window_end(self, w: int) -> int:
        """Global index k_w = wL of the end of window w (1-based)."""
        return w * self.L


@dataclass(frozen=True)
class QpcaWindowInfo:
    """Per-window record of a QPCA-EnDCF update.

    Attributes:
        window: 1-based window index w.
        k_w: Global observation index of the window end.
        effective_kappa: Rank actually used after clamping.
        leading_fraction: Share of trace(C_E) in the retained modes.
        projected_residual_norm: ||V^T (E + Delta_white)||_F.
    """
    window: int
    k_w: int
    effective_kappa: int
    leading_fraction: float
    projected_residual_norm: float


@dataclass
class AssimilationRun:
    """Analyses produced by one method on one trial.

    Attributes:
        method: Method name.
        native_times: Global indices k where the method produced an analysis.
        native_analyses: Analysis ensembles at native_times.
        endpoint_times: Window ends k_w = wL reached so far.
        endpoint_analyses: Analysis ensembles at endpoint_times.
        truth_at_analysis: True states matching native_times.
        endpoint_truth: True states matching endpoint_times.
        window_info: QPCA per-window records (empty for stochastic methods).
        diverged: True if integration blew up and the run stopped early.
        failure: Message describing the divergence, or None.
        observation_digest: SHA-256 of the observation record consumed.
    """
    method: str
    native_times: list[int] = field(default_factory=list)
    native_analyses: list[np.ndarray] = field(default_factory=list)
    endpoint_times: list[int] = field(default_factory=list)
    endpoint_analyses: list[np.ndarray] = field(default_factory=list)
    truth_at_analysis: list[np.ndarray] = field(default_factory=list)
    endpoint_truth: list[np.ndarray] = field(default_factory=list)
    window_info: list[QpcaWindowInfo] = field(default_factory=list)
    diverged: bool = False
    failure: str | None = None
    observation_digest: str = ""

    @property
    def endpoint_means(self) -> np.ndarray:
        """Analysis means at window ends, shape (W, n)."""
        return np.array([members.mean(axis=1) for members in self.endpoint_analyses])


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WindowSeries:
    """Window-endpoint spread/skill series for one run.

    Attributes:
        sigma_w, rmse_w, gamma_w: Per-window spread, RMSE and their ratio
            (gamma_w is NaN where rmse_w == 0).
        gamma_bar: Mean of the defined gamma_w.
        rho: Pearson correlation of sigma_w and rmse_w over defined windows.
        spread, rmse: Root-mean-of-squares over windows (headline values).
        spread_mean_of_roots, rmse_mean_of_roots: Plain means of sigma_w, rmse_w.
    """
    sigma_w: np.ndarray
    rmse_w: np.ndarray
    gamma_w: np.ndarray
    gamma_bar: float
    rho: float
    spread: float
    rmse: float
    spread_mean_of_roots: float
    rmse_mean_of_roots: float


@dataclass(frozen=True)
class RankHistogram:
    """Counts O_b over N+1 rank bins plus uniformity statistics."""
    counts: np.ndarray
    total: int
    chi2: float
    flatness: float


@dataclass(frozen=True)
class BiasVarianceTable:
    """Window-wise and time-averaged bias^2 / variance / MSE (total norms)."""
    bias2_w: np.ndarray
    var_w: np.ndarray
    mse_w: np.ndarray
    bias2: float
    variance: float
    mse: float

    @property
    def bias_ratio(self) -> float:
        """Bias^2 / MSE, NaN when MSE is zero."""
        return self.bias2 / self.mse if self.mse > 0 else math.nan


@dataclass(frozen=True)
class SummaryRow:
    """Across-trial mean and sample std of the headline metrics for one method.

    The mean-of-roots fields average WindowSeries.spread_mean_of_roots and
    rmse_mean_of_roots across trials.
    """
    method: str
    spread_mean: float
    spread_std: float
    rmse_mean: float
    rmse_std: float
    gamma_bar_mean: float
    gamma_bar_std: float
    rho_mean: float
    rho_std: float
    n_trials: int
    spread_mean_of_roots: float = float("nan")
    rmse_mean_of_roots: float = float("nan")


# ---------------------------------------------------------------------------
# Theory checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianResidualModel:
    """Synthetic whitened residuals e ~ N(mu_e, sigma_e) with known spectrum.

    Attributes:
        mu_e: Population mean, length d.
        sigma_e: d x d SPD population covariance.
        eigen: Population eigenpairs in descending order.
        kappa: Truncation rank under study.
    """
    mu_e: np.ndarray
    sigma_e: np.ndarray
    eigen: SymEig
    kappa: int

    @property
    def d(self) -> int:
        return int(self.mu_e.size)

    @property
    def delta_kappa(self) -> float:
        """Cutoff gap lambda_kappa - lambda_{kappa+1} (lambda_kappa if kappa = d)."""
        values = self.eigen.values
        if self.kappa >= self.d:
            return float(values[-1])
        return float(values[self.kappa - 1] - values[self.kappa])

    @property
    def projector(self) -> np.ndarray:
        vectors = self.eigen.vectors[:, : self.kappa]
        return vectors @ vectors.T


@dataclass
class CheckReport:
    """Outcome of one Monte-Carlo property check.

    Attributes:
        name: Check identifier (matches the CLI subcommand).
        passed: True if the property held within tolerance.
        metrics: Named numeric results (estimates, exact values, ratios).
        message: Human-readable one-line verdict.
    """
    name: str
    passed: bool
    metrics: dict[str, float] = field(default_factory=dict)
    message: str = ""


# ---------------------------------------------------------------------------
# Experiment results
# ---------------------------------------------------------------------------

@dataclass
class TrialResult:
    """Everything one (method, trial) task hands back to the harness."""
    method: str
    trial: int
    run: AssimilationRun
    series: WindowSeries | None
    rank_counts: np.ndarray | None


@dataclass
class ResultBundle:
    """Aggregated output of run_experiment.

    Attributes:
        trials: Per (method, trial) results, including diverged ones.
        rank_histograms: Per method, counts summed over surviving trials.
        bias_variance: Per method table (absent when fewer than 2 trials survive).
        summaries: Per method across-trial summary rows.
        hashes: Per trial (truth digest, observation digest).
    """
    trials: list[TrialResult] = field(default_factory=list)
    rank_histograms: dict[str, RankHistogram] = field(default_factory=dict)
    bias_variance: dict[str, BiasVarianceTable] = field(default_factory=dict)
    summaries: dict[str, SummaryRow] = field(default_factory=dict)
    hashes: dict[int, tuple[str, str]] = field(default_factory=dict)

    def surviving(self, method: str) -> list[TrialResult]:
        return [t for t in self.trials if t.method == method and not t.run.diverged]
