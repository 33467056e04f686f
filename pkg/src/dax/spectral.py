"""
QPCA residual machinery.

Whitened residuals, their centered covariance, the truncated eigenbasis and
the observation-space increment that drives the projected residual to zero.
"""

from __future__ import annotations

import logging

import numpy as np

from . import config
from .errors import InvalidInputError
from .linalg import numerical_rank, sym_eig_desc
from .models import ObservationWindow, ResidualSet, TruncatedBasis
from .observation import unwhiten, whiten

logger = logging.getLogger(__name__)


def residual_set(
    Z_stack: np.ndarray,
    z_w: np.ndarray,
    window: ObservationWindow,
) -> ResidualSet:
    """E = R^{-1/2}(Z - z 1^T), its mean, centered copy and C_E = E_c E_c^T/(N-1).

    Args:
        Z_stack: d x N stacked predicted observations.
        z_w: Stacked observation vector, length d.
        window: Window providing R^(L).
    """
    predicted = np.asarray(Z_stack, dtype=float)
    observed = np.asarray(z_w, dtype=float).ravel()
    if predicted.ndim != 2 or predicted.shape[0] != observed.size:
        raise InvalidInputError(
            f"Z_stack shape {predicted.shape} does not match z_w length {observed.size}"
        )
    if predicted.shape[1] < 2:
        raise InvalidInputError("residual covariance needs at least 2 members")

    e_matrix = whiten(window, predicted - observed[:, None])
    e_bar = e_matrix.mean(axis=1)
    centered = e_matrix - e_bar[:, None]
    cov = centered @ centered.T / (predicted.shape[1] - 1)
    return ResidualSet(e_matrix=e_matrix, e_bar=e_bar, centered=centered, cov=cov)


def truncated_basis(rs: ResidualSet, kappa: int) -> TruncatedBasis:
    """Leading-kappa eigenvectors of C_E.

    When C_E has numerical rank below kappa (eigenvalues > 1e-12 · lambda_1),
    the rank is clamped down and a warning is logged; rank 0 yields an empty basis.

    Raises:
        InvalidInputError: If kappa is outside [1, min(d, N-1)].
    """
    d, n_members = rs.e_matrix.shape
    max_rank = min(d, n_members - 1)
    if not 1 <= kappa <= max_rank:
        raise InvalidInputError(f"kappa must lie in [1, {max_rank}], got {kappa}")

    eig = sym_eig_desc(rs.cov)
    values = np.clip(eig.values, 0.0, None)
    rank = numerical_rank(values, config.EIG_RANK_RTOL)

    effective = min(kappa, rank)
    vectors = eig.vectors[:, :effective]
    basis = TruncatedBasis(
        kappa=effective,
        vectors=vectors,
        values=values[:effective],
        projector=vectors @ vectors.T,
        requested_kappa=kappa,
        all_values=values,
    )
    if basis.clamped:
        logger.warning(
            "C_E numerical rank %d below kappa=%d; truncating at %d", rank, kappa, effective,
        )
    return basis


def qpca_coordinates(rs: ResidualSet, basis: TruncatedBasis) -> np.ndarray:
    """Q_PCA = V_kappa^T E on the uncentered residuals."""
    return basis.vectors.T @ rs.e_matrix


def qpca_increment(
    rs: ResidualSet,
    basis: TruncatedBasis,
    window: ObservationWindow,
) -> np.ndarray:
    """Observation-space increment Delta_obs = R^{1/2} (-V_kappa V_kappa^T E)."""
    return unwhiten(window, whitened_increment(rs, basis))


def whitened_increment(rs: ResidualSet, basis: TruncatedBasis) -> np.ndarray:
    """Delta_white = -V_kappa Q_PCA."""
    return -basis.vectors @ qpca_coordinates(rs, basis)


def projected_residual_norm(rs: ResidualSet, basis: TruncatedBasis) -> float:
    """||V_kappa^T (E + Delta_white)||_F; zero up to roundoff."""
    corrected = rs.e_matrix + whitened_increment(rs, basis)
    return float(np.linalg.norm(basis.vectors.T @ corrected))


def leading_fraction(basis: TruncatedBasis) -> float:
    """Share of trace(C_E) carried by the retained eigenvalues."""
    total = float(np.sum(basis.all_values))
    if total <= 0:
        return 0.0
    return float(np.sum(basis.values)) / total
