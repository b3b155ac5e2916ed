"""Post-fit identification of the loading / basis pair.

The marginal covariance pins down only B Lambda_t B^T, so the loading is
first orthonormalized by an eigendecomposition of B^T B and then rotated
toward sparsity by projected gradient ascent on an l1 objective with a
log-determinant barrier, under a fixed Frobenius-norm constraint.  Every
transformation preserves the marginal covariance exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSet
from .exceptions import InvalidParamsError, NumericError
from .linalg import chol_lower
from .params import FactorParams


@dataclass(frozen=True)
class IdentifyConfig:
    tau0: float | None = None  # default: K
    tau_increment: float | None = None  # default: K
    check_every: int = 10
    step_size: float = 1e-2
    max_steps: int = 5000
    tol: float = 1e-7

    def __post_init__(self):
        if self.check_every < 1 or self.max_steps < 1:
            raise InvalidParamsError("check_every and max_steps must be positive")
        if self.step_size <= 0 or self.tol <= 0:
            raise InvalidParamsError("step_size and tol must be positive")


def orthonormalize(params: FactorParams) -> FactorParams:
    """Rotate so the loading columns are orthonormal.

    Eigendecompose B^T B = V D V^T with ascending eigenvalues, then map
    B -> B V D^{-1/2} and every basis matrix through the inverse transform.
    The marginal covariance is unchanged.
    """
    b = params.loading
    gram = b.T @ b
    evals, vecs = np.linalg.eigh(gram)  # ascending
    if evals[0] <= 1e-12 * max(evals[-1], 1.0):
        raise NumericError(
            "B^T B is rank deficient; reduce the number of factors"
        )
    root = np.sqrt(evals)
    b_tilde = b @ vecs / root
    transform = vecs * root  # V D^{1/2}
    mats = np.einsum("ai,dab,bj->dij", transform, params.basis.mats, transform,
                     optimize=True)
    return FactorParams(
        loading=b_tilde, basis=BasisSet(mats), scheme=params.scheme,
        sigma=params.sigma, sigma_basis=params.sigma_basis,
        sigma_scheme=params.sigma_scheme,
    )


def _objective(b_tilde: np.ndarray, a: np.ndarray, tau: float, k: int):
    sign, logdet = np.linalg.slogdet(a)
    if sign <= 0:
        return -np.inf, None
    prod = b_tilde @ a
    return -np.abs(prod).sum() + (tau / k) * logdet, prod


def _project(a: np.ndarray, k: int) -> np.ndarray:
    return a * (np.sqrt(k) / np.linalg.norm(a, "fro"))


def sparsify(params: FactorParams, config: IdentifyConfig = IdentifyConfig()):
    """Sparsity-seeking rotation of an orthonormalized loading.

    Maximizes ``-sum |B~ A| + (tau/K) log|A|`` over A with ||A||_F = sqrt(K)
    by projected gradient ascent; steps that lose a positive determinant or
    decrease the objective are rejected with a smaller step.  tau starts at
    K and grows by K whenever the smallest eigenvalue of (B A)^T (B A)
    stays below half the largest.  Returns the rotated parameters together
    with the rotation matrix.
    """
    b_tilde = params.loading
    k = params.n_factors
    if not np.allclose(b_tilde.T @ b_tilde, np.eye(k), atol=1e-6):
        raise InvalidParamsError("sparsify expects orthonormalized loading columns")
    tau = float(config.tau0) if config.tau0 is not None else float(k)
    tau_inc = (float(config.tau_increment) if config.tau_increment is not None
               else float(k))
    a = np.eye(k)
    step = config.step_size
    value, prod = _objective(b_tilde, a, tau, k)
    objective_trace = [(tau, value)]  # comparable within a fixed tau segment
    accepted = 0
    for it in range(config.max_steps):
        grad = -b_tilde.T @ np.sign(prod) + (tau / k) * np.linalg.inv(a).T
        proposal = _project(a + step * grad, k)
        new_value, new_prod = _objective(b_tilde, proposal, tau, k)
        if not np.isfinite(new_value) or new_value < value:
            step *= 0.5
            if step < 1e-14:
                break
            continue
        rel_gain = abs(new_value - value) / max(abs(value), 1.0)
        a, value, prod = proposal, new_value, new_prod
        objective_trace.append((tau, value))
        accepted += 1
        step = min(step * 1.2, 1.0)
        if accepted % config.check_every == 0:
            svals = np.linalg.svd(b_tilde @ a, compute_uv=False)
            if svals[-1] ** 2 <= 0.5 * svals[0] ** 2:
                tau += tau_inc
                value, prod = _objective(b_tilde, a, tau, k)
                objective_trace.append((tau, value))
        if rel_gain < config.tol:
            break
    a_inv = np.linalg.inv(a)
    mats = np.einsum("ia,dab,jb->dij", a_inv, params.basis.mats, a_inv, optimize=True)
    rotated = FactorParams(
        loading=b_tilde @ a, basis=BasisSet(mats), scheme=params.scheme,
        sigma=params.sigma, sigma_basis=params.sigma_basis,
        sigma_scheme=params.sigma_scheme,
    )
    return rotated, a, objective_trace


def identify(params: FactorParams, config: IdentifyConfig = IdentifyConfig()):
    """Orthonormalize then sparsify; the marginal covariance is preserved."""
    ortho = orthonormalize(params)
    rotated, a, trace = sparsify(ortho, config)
    return rotated, a, trace


def cosine_similarity(loading: np.ndarray, p: int, q: int) -> float:
    """Cosine of the angle between two loading rows (embeddings)."""
    u = loading[p]
    v = loading[q]
    nu_ = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu_ == 0 or nv == 0:
        raise InvalidParamsError("cosine similarity is undefined for a zero row")
    return float(u @ v / (nu_ * nv))


def similarity_matrix(loading: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(loading, axis=1)
    if np.any(norms == 0):
        raise InvalidParamsError("cosine similarity is undefined for a zero row")
    unit = loading / norms[:, None]
    return unit @ unit.T


def time_varying_loadings(params: FactorParams, t) -> np.ndarray:
    """The loading embedding at time t: B chol(Lambda_t) (positive diagonal).

    Satisfies  (B L_t)(B L_t)^T = B Lambda_t B^T exactly; the Cholesky
    factor makes the embedding unique up to the sign convention.
    """
    lam = params.lambda_at(t)
    if lam.ndim == 2:
        return params.loading @ chol_lower(lam)
    return np.einsum("qi,nij->nqj", params.loading, chol_lower(lam))
