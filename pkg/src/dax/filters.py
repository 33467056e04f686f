"""
Assimilation methods and the cycling driver.

Three update rules share one window loop:
  - Sequential EnKF: forecast to every observation time and update there,
    with perturbed observations and post-update inflation.
  - 4D-EnKF: propagate through the window, stack the L predicted
    observations and update once at the window end.
  - QPCA-EnDCF: same window propagation, but the update is the deterministic
    QPCA increment mapped through the data-consistent gain. No RNG, no inflation.

Each method is a BaseFilter subclass; create_filter() picks one by name and
run_filter() cycles it over W windows.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod

import numpy as np
import scipy.linalg

from .dynamics import forecast
from .ensemble import cross_covariances, dc_gain, ensure_ensemble, inflate, stats
from .errors import DivergenceError, InvalidInputError, NotSPDError
from .models import (
    AssimilationRun,
    EnsembleMatrix,
    FilterConfig,
    ModelParams,
    ObservationWindow,
    ObsOperator,
    QpcaWindowInfo,
)
from .observation import observe, record_digest, sample_gaussian, stack_window
from .spectral import (
    leading_fraction,
    projected_residual_norm,
    qpca_increment,
    residual_set,
    truncated_basis,
)

logger = logging.getLogger(__name__)


def _kalman_gain(cross: np.ndarray, innovation_cov: np.ndarray) -> np.ndarray:
    """cross · S^{-1} for SPD S via a Cholesky solve."""
    try:
        return scipy.linalg.solve(innovation_cov, cross.T, assume_a="pos").T
    except np.linalg.LinAlgError as exc:
        raise NotSPDError(f"innovation covariance is not positive definite: {exc}") from exc


def _perturbations(
    cov: np.ndarray,
    n_members: int,
    rng: np.random.Generator | None,
    perturb: bool,
) -> np.ndarray:
    if not perturb:
        return np.zeros((cov.shape[0], n_members))
    if rng is None:
        raise InvalidInputError("perturbed-observation update needs an rng")
    return sample_gaussian(cov, n_members, rng)


# ---------------------------------------------------------------------------
# Update rules
# ---------------------------------------------------------------------------

def seq_enkf_step(
    X: EnsembleMatrix,
    z: np.ndarray,
    H: ObsOperator,
    R: np.ndarray,
    lambda_infl: float,
    rng: np.random.Generator | None,
    perturb: bool = True,
) -> EnsembleMatrix:
    """Stochastic EnKF analysis at one observation time.

    S = cov(HX) + R, K = P^f H^T S^{-1}; member j gets
    x_j + K (z + eps_j - H x_j) with eps_j ~ N(0, R), then inflation.

    Args:
        X: Forecast ensemble at the observation time, n x N.
        z: Observation vector, length m.
        H: Observation operator.
        R: m x m observation error covariance.
        lambda_infl: Multiplicative inflation applied after the update.
        rng: Generator for the perturbations (unused when perturb is False).
        perturb: Draw observation perturbations; False forces eps = 0.

    Returns:
        Analysis ensemble, n x N.
    """
    members = ensure_ensemble(X, "forecast ensemble")
    observation = np.asarray(z, dtype=float).ravel()
    noise_cov = np.atleast_2d(np.asarray(R, dtype=float))
    if observation.size != H.m or noise_cov.shape != (H.m, H.m):
        raise InvalidInputError(
            f"z has length {observation.size} and R shape {noise_cov.shape}; H has m={H.m}"
        )

    forecast_stats = stats(members)
    predicted = observe(H, members)
    _, p_zz = cross_covariances(predicted, predicted)
    innovation_cov = p_zz + noise_cov
    cross = forecast_stats.covariance[:, H.selected_indices]
    gain = _kalman_gain(cross, innovation_cov)

    eps = _perturbations(noise_cov, members.shape[1], rng, perturb)
    analysis = members + gain @ (observation[:, None] + eps - predicted)
    return inflate(analysis, lambda_infl)


def window_forecast(
    X: EnsembleMatrix,
    L: int,
    H: ObsOperator,
    params: ModelParams,
) -> tuple[EnsembleMatrix, np.ndarray]:
    """Propagate through L observation intervals, recording H x at each.

    Returns:
        (X at the window end, stacked predictions Z^(w) of shape (mL, N)).
    """
    members = ensure_ensemble(X)
    predictions = []
    for _ in range(L):
        members = forecast(members, params)
        predictions.append(observe(H, members))
    return members, np.vstack(predictions)


def fourd_enkf_window(
    X: EnsembleMatrix,
    window: ObservationWindow,
    config: FilterConfig,
    rng: np.random.Generator | None,
    perturb: bool = True,
) -> EnsembleMatrix:
    """4D-EnKF update of one window; returns the analysis at k_w.

    K^(w) = P_xz (P_zz + R^(L))^{-1} with P_xz anchored at the window end;
    member j moves by K^(w) (z^(w) + eps_j - Z_j).
    """
    H = config.obs_operator()
    x_end, predicted = window_forecast(X, window.L, H, config.model)
    p_xz, p_zz = cross_covariances(x_end, predicted)
    gain = _kalman_gain(p_xz, p_zz + window.r_stacked)

    eps = _perturbations(window.r_stacked, x_end.shape[1], rng, perturb)
    analysis = x_end + gain @ (window.stacked[:, None] + eps - predicted)
    return inflate(analysis, config.lambda_infl)


def qpca_endcf_analysis(
    X_end: EnsembleMatrix,
    Z_stack: np.ndarray,
    window: ObservationWindow,
    config: FilterConfig,
) -> tuple[EnsembleMatrix, QpcaWindowInfo]:
    """Deterministic QPCA-EnDCF update at the window end.

    Whitened residuals E are projected onto the leading kappa eigenvectors of
    their centered covariance; the increment -V V^T E is unwhitened and mapped
    to state space with K^DC = P_xz P_zz^+. A degenerate residual covariance
    (numerical rank 0) leaves the forecast unchanged.
    """
    members = ensure_ensemble(X_end, "X_end")
    rs = residual_set(Z_stack, window.stacked, window)
    basis = truncated_basis(rs, config.kappa)
    info = QpcaWindowInfo(
        window=window.k_end // config.L,
        k_w=window.k_end,
        effective_kappa=basis.kappa,
        leading_fraction=leading_fraction(basis),
        projected_residual_norm=projected_residual_norm(rs, basis),
    )
    if basis.kappa == 0:
        return members.copy(), info

    delta_obs = qpca_increment(rs, basis, window)
    gain = dc_gain(members, Z_stack, config.gain_inverse, config.tikhonov_eps).gain
    return members + gain @ delta_obs, info


def qpca_endcf_window(
    X: EnsembleMatrix,
    window: ObservationWindow,
    config: FilterConfig,
) -> EnsembleMatrix:
    """Propagate through the window and apply the QPCA-EnDCF update at k_w."""
    x_end, predicted = window_forecast(X, window.L, config.obs_operator(), config.model)
    analysis, _ = qpca_endcf_analysis(x_end, predicted, window, config)
    return analysis


# ---------------------------------------------------------------------------
# Filter classes
# ---------------------------------------------------------------------------

class BaseFilter(ABC):
    """Interface every assimilation method implements for the cycling driver."""

    def __init__(self, config: FilterConfig) -> None:
        self.config = config
        self.H = config.obs_operator()
        self.window_info: list[QpcaWindowInfo] = []

    @abstractmethod
    def assimilate_window(
        self,
        X: EnsembleMatrix,
        window: ObservationWindow,
    ) -> list[tuple[int, EnsembleMatrix]]:
        """Advance X from k_0(w) through the window.

        Returns:
            (k, analysis) pairs at the method's native analysis times; the
            last pair is always at k_w.
        """

    @property
    @abstractmethod
    def method(self) -> str:
        """Method name as used in configs and output files."""


class SequentialEnKF(BaseFilter):
    """Perturbed-observation EnKF updating at every observation time."""

    def __init__(self, config: FilterConfig, rng: np.random.Generator | None) -> None:
        super().__init__(config)
        self.rng = rng

    @property
    def method(self) -> str:
        return "seq_enkf"

    def assimilate_window(self, X, window):
        m = self.H.m
        noise_cov = window.r_stacked[:m, :m]
        analyses = []
        members = X
        for ell, z in enumerate(window.per_time, start=1):
            members = forecast(members, self.config.model)
            members = seq_enkf_step(
                members, z, self.H, noise_cov, self.config.lambda_infl, self.rng,
            )
            analyses.append((window.k_start + ell, members))
        return analyses


class FourDEnKF(BaseFilter):
    """Perturbed-observation EnKF with one stacked update per window."""

    def __init__(self, config: FilterConfig, rng: np.random.Generator | None) -> None:
        super().__init__(config)
        self.rng = rng

    @property
    def method(self) -> str:
        return "fourd_enkf"

    def assimilate_window(self, X, window):
        analysis = fourd_enkf_window(X, window, self.config, self.rng)
        return [(window.k_end, analysis)]


class QpcaEnDCF(BaseFilter):
    """Deterministic QPCA-truncated data-consistency filter."""

    @property
    def method(self) -> str:
        return "qpca_endcf"

    def assimilate_window(self, X, window):
        x_end, predicted = window_forecast(X, window.L, self.H, self.config.model)
        analysis, info = qpca_endcf_analysis(x_end, predicted, window, self.config)
        self.window_info.append(info)
        return [(window.k_end, analysis)]


def create_filter(config: FilterConfig, rng: np.random.Generator | None = None) -> BaseFilter:
    """
    Build the filter named by config.method.
    - seq_enkf   -> SequentialEnKF (needs rng)
    - fourd_enkf -> FourDEnKF (needs rng)
    - qpca_endcf -> QpcaEnDCF (rng ignored)
    """
    if config.method == "seq_enkf":
        if rng is None:
            raise InvalidInputError("seq_enkf needs an rng for observation perturbations")
        return SequentialEnKF(config, rng)
    if config.method == "fourd_enkf":
        if rng is None:
            raise InvalidInputError("fourd_enkf needs an rng for observation perturbations")
        return FourDEnKF(config, rng)
    if config.method == "qpca_endcf":
        return QpcaEnDCF(config)
    raise InvalidInputError(f"unknown method '{config.method}'")


# ---------------------------------------------------------------------------
# Cycling driver
# ---------------------------------------------------------------------------

def run_filter(
    config: FilterConfig,
    truth: np.ndarray,
    observations: np.ndarray,
    initial: EnsembleMatrix,
    rng: np.random.Generator | None = None,
) -> AssimilationRun:
    """Cycle one method over W windows of L observations.

    Args:
        config: Filter configuration.
        truth: True states at k = 0..K, shape (K+1, n).
        observations: Observation record, shape (K, m); row k-1 holds z_k.
        initial: Initial ensemble at k = 0, n x N.
        rng: Perturbation generator for the stochastic methods.

    Returns:
        AssimilationRun with native and window-endpoint analyses. Divergence
        stops the cycle and is recorded on the run instead of raised.
    """
    states = np.asarray(truth, dtype=float)
    record = np.asarray(observations, dtype=float)
    if states.ndim != 2 or states.shape[0] < config.K + 1 or states.shape[1] != config.n:
        raise InvalidInputError(
            f"truth must have shape ({config.K + 1}, {config.n}), got {states.shape}"
        )
    if record.ndim != 2 or record.shape[0] < config.K or record.shape[1] != config.m:
        raise InvalidInputError(
            f"observations must have shape ({config.K}, {config.m}), got {record.shape}"
        )
    members = ensure_ensemble(initial, "initial ensemble")
    if members.shape != (config.n, config.N):
        raise InvalidInputError(
            f"initial ensemble must be {config.n} x {config.N}, got {members.shape}"
        )

    filt = create_filter(config, rng)
    run = AssimilationRun(
        method=config.method,
        observation_digest=record_digest(record[: config.K]),
    )

    try:
        for w in range(1, config.W + 1):
            k_start = config.window_end(w - 1)
            window = stack_window(
                record[k_start : k_start + config.L],
                sigma_obs=config.sigma_obs,
                k_start=k_start,
            )
            for k, analysis in filt.assimilate_window(members, window):
                run.native_times.append(k)
                run.native_analyses.append(analysis)
                run.truth_at_analysis.append(states[k])
                members = analysis
            run.endpoint_times.append(window.k_end)
            run.endpoint_analyses.append(members)
            run.endpoint_truth.append(states[window.k_end])
    except DivergenceError as exc:
        run.diverged = True
        run.failure = str(exc)
        logger.warning("%s diverged after %d windows: %s", config.method, len(run.endpoint_times), exc)

    run.window_info = list(filt.window_info)
    return run
