"""Symmetric positive-definite matrix primitives used by every estimator.

All inversions go through a Cholesky factorization.  When a factorization
fails, a single jitter of ``1e-10 * tr(M)/K`` is added to the diagonal and
the factorization retried once; a second failure raises ``NumericError``
with diagnostics.  Everything is batched over a leading axis where useful.
"""

from __future__ import annotations

import numpy as np

from .exceptions import NumericError

JITTER_SCALE = 1e-10


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def _jittered(m: np.ndarray) -> np.ndarray:
    k = m.shape[-1]
    tr = np.trace(m, axis1=-2, axis2=-1)
    eps = JITTER_SCALE * tr / k
    return m + eps[..., None, None] * np.eye(k)


def spd_cholesky(m: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor of ``m`` (batched), with the jitter-once policy."""
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.cholesky(_jittered(symmetrize(m)))
    except np.linalg.LinAlgError as exc:
        eigmin = float(np.min(np.linalg.eigvalsh(symmetrize(m))))
        raise NumericError(
            f"{what} is not positive definite even after jitter "
            f"(shape {m.shape}, min eigenvalue {eigmin:.3e})"
        ) from exc


def spd_inverse(m: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Inverse of an SPD matrix (batched) via its Cholesky factor."""
    chol = spd_cholesky(m, what)
    linv = np.linalg.inv(chol)
    return np.swapaxes(linv, -1, -2) @ linv


def spd_logdet(m: np.ndarray, what: str = "matrix") -> np.ndarray:
    """log det of an SPD matrix (batched) via its Cholesky factor."""
    chol = spd_cholesky(m, what)
    diag = np.diagonal(chol, axis1=-2, axis2=-1)
    return 2.0 * np.sum(np.log(diag), axis=-1)


def spd_inverse_and_logdet(m: np.ndarray, what: str = "matrix"):
    chol = spd_cholesky(m, what)
    diag = np.diagonal(chol, axis1=-2, axis2=-1)
    logdet = 2.0 * np.sum(np.log(diag), axis=-1)
    linv = np.linalg.inv(chol)
    return np.swapaxes(linv, -1, -2) @ linv, logdet


def spd_solve(m: np.ndarray, b: np.ndarray, what: str = "matrix") -> np.ndarray:
    chol = spd_cholesky(m, what)
    y = np.linalg.solve(chol, b)
    return np.linalg.solve(np.swapaxes(chol, -1, -2), y)


def chol_lower(m: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor with the positive-diagonal convention."""
    return spd_cholesky(m, "matrix for Cholesky embedding")
