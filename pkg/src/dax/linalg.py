"""
Dense symmetric / SPD kernels.

Eigendecomposition in descending order with a fixed sign convention, the
Moore-Penrose pseudoinverse with an explicit relative cutoff, a Tikhonov
inverse, and SPD square-root pairs used for whitening.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from . import config
from .errors import InvalidInputError, NotSPDError
from .models import SymEig


def _require_finite(matrix: np.ndarray, name: str) -> np.ndarray:
    array = np.asarray(matrix, dtype=float)
    if not np.all(np.isfinite(array)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return array


def _require_square(matrix: np.ndarray, name: str) -> None:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {matrix.shape}")


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    """Return (M + M^T) / 2."""
    return 0.5 * (matrix + matrix.T)


def sym_eig_desc(matrix: np.ndarray) -> SymEig:
    """Eigendecomposition of a symmetric matrix, largest eigenvalue first.

    The input is symmetrized first. Ties keep the solver's original index order
    (stable sort). Each eigenvector is flipped so its largest-magnitude entry is
    positive, making the output bit-reproducible.

    Args:
        matrix: p x p real symmetric matrix.

    Returns:
        SymEig with descending values and orthonormal columns.

    Raises:
        InvalidInputError: If the matrix is not square or has non-finite entries.
    """
    array = _require_finite(matrix, "matrix")
    _require_square(array, "matrix")

    values, vectors = scipy.linalg.eigh(symmetrize(array))
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = vectors[:, order]

    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return SymEig(values=values, vectors=vectors * signs)


def default_rtol(shape: tuple[int, ...]) -> float:
    """max(p, q) · machine epsilon."""
    return max(shape) * np.finfo(float).eps


def pinv(matrix: np.ndarray, rtol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values at or below rtol · sigma_max are treated as zero.

    Args:
        matrix: p x q real matrix.
        rtol: Relative cutoff; defaults to max(p, q) · eps.

    Returns:
        q x p pseudoinverse.
    """
    array = _require_finite(matrix, "matrix")
    if array.ndim != 2:
        raise InvalidInputError(f"matrix must be 2-D, got shape {array.shape}")
    if rtol is None:
        rtol = default_rtol(array.shape)
    if rtol < 0:
        raise InvalidInputError(f"rtol must be >= 0, got {rtol}")
    if array.size == 0:
        return np.zeros(array.shape[::-1])

    u, s, vt = np.linalg.svd(array, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(array.shape[::-1])
    keep = s > rtol * s[0]
    inverse_s = np.zeros_like(s)
    inverse_s[keep] = 1.0 / s[keep]
    return (vt.T * inverse_s) @ u.T


def tikhonov_inverse(matrix: np.ndarray, eps: float) -> np.ndarray:
    """(M + eps I)^{-1} for a symmetric PSD matrix M and eps > 0."""
    array = _require_finite(matrix, "matrix")
    _require_square(array, "matrix")
    if not eps > 0:
        raise InvalidInputError(f"Tikhonov eps must be > 0, got {eps}")
    regularized = symmetrize(array) + eps * np.eye(array.shape[0])
    return scipy.linalg.solve(regularized, np.eye(array.shape[0]), assume_a="pos")


def is_diagonal(matrix: np.ndarray) -> bool:
    return bool(np.count_nonzero(matrix - np.diag(np.diagonal(matrix))) == 0)


def spd_sqrt_pair(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric square root and inverse square root of an SPD matrix.

    Diagonal inputs take the elementwise path (exact sqrt and 1/sqrt); other
    inputs go through the symmetric eigendecomposition.

    Args:
        matrix: p x p symmetric positive definite matrix.

    Returns:
        Tuple (M^{1/2}, M^{-1/2}).

    Raises:
        NotSPDError: If any eigenvalue is <= 0 or M is not symmetric.
    """
    array = _require_finite(matrix, "matrix")
    _require_square(array, "matrix")
    scale = max(1.0, float(np.max(np.abs(array))) if array.size else 1.0)
    if np.max(np.abs(array - array.T), initial=0.0) > config.SYMMETRY_TOL * scale:
        raise NotSPDError("matrix is not symmetric")

    if is_diagonal(array):
        diagonal = np.diagonal(array)
        if np.any(diagonal <= 0):
            raise NotSPDError(f"matrix has non-positive eigenvalue {diagonal.min():.3g}")
        root = np.sqrt(diagonal)
        return np.diag(root), np.diag(1.0 / root)

    eig = sym_eig_desc(array)
    if eig.values[-1] <= 0:
        raise NotSPDError(f"matrix has non-positive eigenvalue {eig.values[-1]:.3g}")
    root = np.sqrt(eig.values)
    sqrt_m = (eig.vectors * root) @ eig.vectors.T
    inv_sqrt_m = (eig.vectors / root) @ eig.vectors.T
    return symmetrize(sqrt_m), symmetrize(inv_sqrt_m)


def numerical_rank(values: np.ndarray, rtol: float = config.PSD_RANK_RTOL) -> int:
    """Count eigenvalues above rtol · max(values); zero for an all-zero spectrum."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0
    top = float(np.max(values))
    if top <= 0:
        return 0
    return int(np.count_nonzero(values > rtol * top))
