"""
Ensemble statistics and the empirical data-consistent gain.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError
from .linalg import pinv, tikhonov_inverse
from .models import DcGain, EnsembleMatrix, EnsembleStats


def ensure_ensemble(X: np.ndarray, name: str = "ensemble") -> EnsembleMatrix:
    """Validate an n x N ensemble (N >= 2, finite) and return it as floats."""
    members = np.asarray(X, dtype=float)
    if members.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D (n x N), got shape {members.shape}")
    if members.shape[1] < 2:
        raise InvalidInputError(f"{name} needs N >= 2 members, got {members.shape[1]}")
    if not np.all(np.isfinite(members)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return members


def anomalies(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (mean, X - mean 1^T) along the member axis."""
    mean = X.mean(axis=1)
    return mean, X - mean[:, None]


def stats(X: EnsembleMatrix) -> EnsembleStats:
    """Mean, anomalies and unbiased sample covariance A A^T / (N - 1)."""
    members = ensure_ensemble(X)
    mean, anomaly_matrix = anomalies(members)
    covariance = anomaly_matrix @ anomaly_matrix.T / (members.shape[1] - 1)
    return EnsembleStats(mean=mean, anomalies=anomaly_matrix, covariance=covariance)


def cross_covariances(X: np.ndarray, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(P_xz, P_zz) from state and predicted-observation ensembles."""
    n_members = X.shape[1]
    _, a_x = anomalies(X)
    _, a_z = anomalies(Z)
    p_xz = a_x @ a_z.T / (n_members - 1)
    p_zz = a_z @ a_z.T / (n_members - 1)
    return p_xz, p_zz


def dc_gain(
    X_end: EnsembleMatrix,
    Z: np.ndarray,
    inverse: str = "pinv",
    eps: float | None = None,
    rtol: float | None = None,
) -> DcGain:
    """Empirical data-consistent gain K = P_xz P_zz^+ (or Tikhonov-regularized).

    Args:
        X_end: Window-endpoint forecast ensemble, n x N.
        Z: Stacked predicted observations from the window trajectory, d x N.
        inverse: "pinv" (default) or "tikhonov".
        eps: Ridge for the Tikhonov inverse.
        rtol: Relative singular-value cutoff for pinv.

    Returns:
        DcGain with P_xz, P_zz and the gain.
    """
    members = ensure_ensemble(X_end, "X_end")
    predicted = np.asarray(Z, dtype=float)
    if predicted.ndim != 2 or predicted.shape[1] != members.shape[1]:
        raise InvalidInputError(
            f"Z must have {members.shape[1]} columns, got shape {predicted.shape}"
        )

    p_xz, p_zz = cross_covariances(members, predicted)
    if inverse == "pinv":
        p_zz_inverse = pinv(p_zz, rtol=rtol)
    elif inverse == "tikhonov":
        if eps is None:
            raise InvalidInputError("Tikhonov inverse requires eps")
        p_zz_inverse = tikhonov_inverse(p_zz, eps)
    else:
        raise InvalidInputError(f"unknown gain inverse '{inverse}'")
    return DcGain(p_xz=p_xz, p_zz=p_zz, gain=p_xz @ p_zz_inverse)


def inflate(X: EnsembleMatrix, lambda_infl: float) -> EnsembleMatrix:
    """Scale anomalies about the ensemble mean by lambda_infl >= 1."""
    if lambda_infl < 1.0:
        raise InvalidInputError(f"lambda_infl must be >= 1, got {lambda_infl}")
    members = ensure_ensemble(X)
    if lambda_infl == 1.0:
        return members.copy()
    mean, anomaly_matrix = anomalies(members)
    return mean[:, None] + lambda_infl * anomaly_matrix


def initial_ensemble(
    x0: np.ndarray,
    n_members: int,
    sigma_init: float,
    rng: np.random.Generator,
) -> EnsembleMatrix:
    """Members x0 + N(0, sigma_init^2 I), shape (n, n_members)."""
    if n_members < 2:
        raise InvalidInputError(f"need at least 2 members, got {n_members}")
    state = np.asarray(x0, dtype=float)
    return state[:, None] + sigma_init * rng.standard_normal((state.size, n_members))
