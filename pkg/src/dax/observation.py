"""
Observation operator, synthetic observations, window stacking and whitening.
"""

from __future__ import annotations

import hashlib
from collections.abc import Sequence

import numpy as np
import scipy.linalg

from .errors import InvalidInputError
from .linalg import spd_sqrt_pair
from .models import ObservationWindow, ObsOperator


def observe(H: ObsOperator, x: np.ndarray) -> np.ndarray:
    """Apply H: pick the selected components of a state or of every ensemble column."""
    state = np.asarray(x, dtype=float)
    if state.shape[0] != H.n:
        raise InvalidInputError(f"state has {state.shape[0]} components, H expects {H.n}")
    return state[H.selected_indices]


def sample_gaussian(cov: np.ndarray, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n_samples columns from N(0, cov) via the Cholesky factor.

    Returns:
        Array of shape (p, n_samples).
    """
    covariance = np.atleast_2d(np.asarray(cov, dtype=float))
    factor = scipy.linalg.cholesky(covariance, lower=True)
    return factor @ rng.standard_normal((covariance.shape[0], n_samples))


def synthesize_obs(
    H: ObsOperator,
    x_true: np.ndarray,
    sigma_obs: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """z = H x_true + sigma · eta with eta i.i.d. standard normal."""
    if sigma_obs < 0:
        raise InvalidInputError(f"sigma_obs must be >= 0, got {sigma_obs}")
    noise = rng.standard_normal(H.m)
    return observe(H, x_true) + sigma_obs * noise


def synthesize_observations(
    H: ObsOperator,
    truth_states: np.ndarray,
    sigma_obs: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Observation record for states at k = 1..K, shape (K, m); row k-1 is z_k."""
    return np.array([synthesize_obs(H, state, sigma_obs, rng) for state in truth_states])


def stack_window(
    obs: Sequence[np.ndarray],
    sigma_obs: float | None = None,
    r: np.ndarray | None = None,
    k_start: int = 0,
) -> ObservationWindow:
    """Stack L observation vectors into z^(w) with block-diagonal R^(L).

    Exactly one of sigma_obs (R = sigma^2 I) or r (general m x m SPD) is given.

    Raises:
        InvalidInputError: On empty input, mismatched lengths, or bad noise spec.
        NotSPDError: If r is not symmetric positive definite.
    """
    per_time = [np.asarray(z, dtype=float).ravel() for z in obs]
    if not per_time:
        raise InvalidInputError("a window needs at least one observation")
    m = per_time[0].size
    if any(z.size != m for z in per_time):
        raise InvalidInputError("all observations in a window must have the same length")
    if (sigma_obs is None) == (r is None):
        raise InvalidInputError("give exactly one of sigma_obs or r")

    L = len(per_time)
    if sigma_obs is not None:
        if not sigma_obs > 0:
            raise InvalidInputError(f"sigma_obs must be positive, got {sigma_obs}")
        r_stacked = sigma_obs**2 * np.eye(m * L)
    else:
        r_block = np.asarray(r, dtype=float)
        if r_block.shape != (m, m):
            raise InvalidInputError(f"r must be {m} x {m}, got {r_block.shape}")
        spd_sqrt_pair(r_block)
        r_stacked = np.kron(np.eye(L), r_block)

    return ObservationWindow(
        per_time=per_time,
        stacked=np.concatenate(per_time),
        r_stacked=r_stacked,
        sigma_obs=sigma_obs,
        k_start=k_start,
    )


def whiten(window: ObservationWindow, D: np.ndarray) -> np.ndarray:
    """R^{-1/2} D; scalar division by sigma when R = sigma^2 I."""
    data = np.asarray(D, dtype=float)
    if data.shape[0] != window.d:
        raise InvalidInputError(f"D has {data.shape[0]} rows, window has d={window.d}")
    if window.is_scalar:
        return data / window.sigma_obs
    _, inv_root = spd_sqrt_pair(window.r_stacked)
    return inv_root @ data


def unwhiten(window: ObservationWindow, delta_white: np.ndarray) -> np.ndarray:
    """R^{1/2} Delta; scalar multiplication by sigma when R = sigma^2 I."""
    data = np.asarray(delta_white, dtype=float)
    if data.shape[0] != window.d:
        raise InvalidInputError(f"Delta has {data.shape[0]} rows, window has d={window.d}")
    if window.is_scalar:
        return data * window.sigma_obs
    root, _ = spd_sqrt_pair(window.r_stacked)
    return root @ data


def record_digest(values: np.ndarray) -> str:
    """SHA-256 of an array's float64 little-endian bytes, used to prove streams are shared."""
    data = np.ascontiguousarray(np.asarray(values, dtype="<f8"))
    return hashlib.sha256(data.tobytes()).hexdigest()
