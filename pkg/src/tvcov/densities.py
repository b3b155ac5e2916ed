"""Log-densities of the marginal observation models.

Everything is computed in log space through the Woodbury identity and the
matrix determinant lemma, so only K x K systems are ever factorized even
when Q runs into the thousands.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from .exceptions import InvalidParamsError
from .linalg import spd_inverse_and_logdet
from .params import FactorParams

LOG_2PI = float(np.log(2.0 * np.pi))

FAMILY_GAUSSIAN = "gaussian"
FAMILY_STUDENT_T = "student_t"


def lowrank_gaussian_parts(y, loading, lam, sigma):
    """Quadratic forms and log-determinants of N(0, B Lam B^T + diag(sigma)).

    Parameters are batched over the first axis of ``y`` (N, Q); ``lam`` may
    be (K, K) or (N, K, K); ``sigma`` may be (Q,) or (N, Q).  Returns
    ``(quad, logdet)`` each of shape (N,).
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    n, q = y.shape
    k = loading.shape[1]
    lam = np.asarray(lam, dtype=float)
    if lam.ndim == 2:
        lam = np.broadcast_to(lam, (n, k, k))
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim == 1:
        sigma = np.broadcast_to(sigma, (n, q))
    if np.any(sigma <= 0):
        raise InvalidParamsError("noise variances must be strictly positive")

    lam_inv, lam_logdet = spd_inverse_and_logdet(lam, "factor covariance")
    # B^T Sigma^{-1} B per point and B^T Sigma^{-1} y
    inv_sigma = 1.0 / sigma
    bt_sig_b = np.einsum("qi,nq,qj->nij", loading, inv_sigma, loading, optimize=True)
    z = (y * inv_sigma) @ loading  # (N, K)
    m = lam_inv + bt_sig_b
    m_inv, m_logdet = spd_inverse_and_logdet(m, "posterior factor precision")
    quad_full = np.sum(y * y * inv_sigma, axis=1)
    quad_corr = np.einsum("ni,nij,nj->n", z, m_inv, z, optimize=True)
    quad = quad_full - quad_corr
    logdet = np.sum(np.log(sigma), axis=1) + lam_logdet + m_logdet
    return quad, logdet


def gaussian_logpdf_lowrank(y, loading, lam, sigma) -> np.ndarray:
    quad, logdet = lowrank_gaussian_parts(y, loading, lam, sigma)
    q = np.atleast_2d(y).shape[1]
    return -0.5 * (q * LOG_2PI + logdet + quad)


def student_t_logpdf_lowrank(y, loading, lam, sigma, nu: float) -> np.ndarray:
    if nu <= 0:
        raise InvalidParamsError("degrees of freedom must be positive")
    quad, logdet = lowrank_gaussian_parts(y, loading, lam, sigma)
    q = np.atleast_2d(y).shape[1]
    return (
        gammaln(0.5 * (nu + q))
        - gammaln(0.5 * nu)
        - 0.5 * q * np.log(nu * np.pi)
        - 0.5 * logdet
        - 0.5 * (nu + q) * np.log1p(quad / nu)
    )


def marginal_covariance(t, params: FactorParams) -> np.ndarray:
    """Dense Q x Q marginal covariance ``B Lambda_t B^T + Sigma(_t)``."""
    lam = params.lambda_at(t)
    sig = params.sigma_at(t)
    b = params.loading
    if np.ndim(t) == 0:
        return b @ lam @ b.T + np.diag(np.asarray(sig, dtype=float))
    cov = np.einsum("qi,nij,rj->nqr", b, lam, b)
    idx = np.arange(b.shape[0])
    cov[:, idx, idx] += np.asarray(sig, dtype=float)
    return cov


def log_density(y, t, params: FactorParams, family: str = FAMILY_GAUSSIAN, nu: float | None = None):
    """Exact log-density of observation(s) under the fitted marginal model.

    ``family`` is "gaussian" or "student_t" (the latter requires ``nu``).
    Scalar ``t`` with a single observation returns a float; otherwise one
    value per time point.
    """
    scalar = np.ndim(t) == 0
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    y_arr = np.atleast_2d(np.asarray(y, dtype=float))
    lam = params.lambda_at(t_arr)
    sig = params.sigma_at(t_arr)
    if np.ndim(sig) == 1:  # constant-sigma broadcast over time
        sig = np.broadcast_to(sig, (t_arr.size, params.n_outputs))
    if family == FAMILY_GAUSSIAN:
        out = gaussian_logpdf_lowrank(y_arr, params.loading, lam, sig)
    elif family == FAMILY_STUDENT_T:
        if nu is None:
            raise InvalidParamsError("student_t family requires nu")
        out = student_t_logpdf_lowrank(y_arr, params.loading, lam, sig, nu)
    else:
        raise InvalidParamsError(f"unknown family {family!r}")
    return float(out[0]) if scalar else out
