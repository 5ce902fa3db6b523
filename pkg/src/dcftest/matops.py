"""Covariance constructors and the symmetric PSD square root."""

import numpy as np

__all__ = ["poly_decay_cov", "scaled_cov", "sym_sqrt", "check_cov"]

CLIP_RTOL = 1e-8
REJECT_RTOL = 1e-6


def poly_decay_cov(p):
    """Toeplitz covariance with entries ``(1 + |j - k|) ** -0.25``.

    Parameters
    ----------
    p : int
        Dimension, at least 1.

    Returns
    -------
    ndarray of shape (p, p)
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    idx = np.arange(p)
    return (1.0 + np.abs(idx[:, None] - idx[None, :])) ** -0.25


def scaled_cov(base, phi):
    """Return ``D @ base @ D`` with ``D = diag(sqrt(phi))``.

    Entry ``(j, k)`` is ``sqrt(phi[j] * phi[k]) * base[j, k]``.
    """
    base = np.asarray(base, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if base.ndim != 2 or base.shape[0] != base.shape[1]:
        raise ValueError("base must be a square matrix")
    if phi.shape != (base.shape[0],):
        raise ValueError(f"phi has shape {phi.shape}, expected ({base.shape[0]},)")
    if np.any(phi <= 0) or not np.all(np.isfinite(phi)):
        raise ValueError("phi entries must be finite and positive")
    d = np.sqrt(phi)
    return d[:, None] * base * d[None, :]


def check_cov(M, atol=1e-12):
    """Validate that ``M`` is a symmetric numerically-PSD matrix; return it as float."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("covariance must be a square matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError("covariance has non-finite entries")
    if np.max(np.abs(M - M.T), initial=0.0) > atol:
        raise ValueError("covariance is not symmetric")
    return M


def sym_sqrt(M):
    """Symmetric square root of a PSD matrix by eigendecomposition.

    Eigenvalues below ``1e-8 * lambda_max`` are clipped to zero. A matrix with
    an eigenvalue below ``-1e-6 * lambda_max`` is rejected as indefinite.

    Parameters
    ----------
    M : array-like of shape (p, p)

    Returns
    -------
    R : ndarray of shape (p, p)
        Symmetric, with ``R @ R`` reconstructing ``M``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("M must be a square matrix")
    # symmetrize so eigh sees exactly the matrix we reconstruct
    M = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(M)
    lam_max = max(w[-1], 0.0)
    if w[0] < -REJECT_RTOL * lam_max or (lam_max == 0.0 and w[0] < 0.0):
        raise ValueError(f"matrix is not positive semidefinite (min eigenvalue {w[0]:.3g})")
    w = np.where(w < CLIP_RTOL * lam_max, 0.0, w)
    R = (V * np.sqrt(w)) @ V.T
    return 0.5 * (R + R.T)
