"""Synthetic data with a known time-varying covariance truth.

The generator draws every entry of a K x K matrix path from a Gaussian
process with a squared-exponential kernel, normalizes the outer product to
a correlation matrix at each time, attaches a block-diagonal loading and
uniform idiosyncratic variances, and samples Gaussian or Student's-t
observations.  Everything is reproducible from the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError
from .linalg import spd_cholesky
from .rng import rng_for

GAMMA_GRID = (3, 4, 5)
S2_GRID = (0.25, 0.5, 1.0, 2.0)


@dataclass(frozen=True)
class SimulationSpec:
    n_times: int = 300
    n_outputs: int = 130
    n_factors: int = 5
    gamma: float = 3.0
    s2: float = 0.25
    family: str = "gaussian"
    nu: float = 6.0
    seed: int = 0

    def __post_init__(self):
        if min(self.n_times, self.n_outputs, self.n_factors) < 1:
            raise ConfigError("dimensions must be positive")
        if self.family not in ("gaussian", "student_t"):
            raise ConfigError(f"unknown family {self.family!r}")
        if self.s2 <= 0:
            raise ConfigError("s2 must be positive")


@dataclass(frozen=True)
class SimulationTruth:
    loading: np.ndarray  # (Q, K)
    sigma: np.ndarray  # (Q,)
    lambdas: np.ndarray  # (N, K, K) correlation matrices of the factor process

    def covariance(self, index) -> np.ndarray:
        """True marginal covariance at sample index (or indices)."""
        lam = self.lambdas[index]
        b = self.loading
        if lam.ndim == 2:
            return b @ lam @ b.T + np.diag(self.sigma)
        out = np.einsum("qi,nij,rj->nqr", b, lam, b)
        idx = np.arange(b.shape[0])
        out[:, idx, idx] += self.sigma
        return out


def block_diagonal_loading(q: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Contiguous blocks of size floor(Q/K) (remainder joins the last block),
    in-block entries ~ N(1, 0.1^2), zero elsewhere."""
    b = np.zeros((q, k))
    size = q // k
    for j in range(k):
        lo = j * size
        hi = (j + 1) * size if j < k - 1 else q
        b[lo:hi, j] = rng.normal(1.0, 0.1, size=hi - lo)
    return b


def gp_correlation_path(
    n: int, k: int, gamma: float, rng: np.random.Generator
) -> np.ndarray:
    """Correlation-normalized outer products of GP matrix entries.

    Each of the K*K coordinates follows an independent GP with kernel
    ``exp(-0.5 * 10^-gamma * dt^2)`` over times 1..N; at each time the
    matrix R R^T is rescaled to unit diagonal.
    """
    t = np.arange(1, n + 1, dtype=float)
    gram = np.exp(-0.5 * (10.0 ** -gamma) * (t[:, None] - t) ** 2)
    gram[np.diag_indices(n)] += 1e-10  # GP Gram matrices graze singularity
    chol = spd_cholesky(gram, "GP Gram matrix")
    r = (chol @ rng.standard_normal((n, k * k))).reshape(n, k, k)
    m = np.einsum("nij,nkj->nik", r, r)
    d = np.sqrt(np.diagonal(m, axis1=1, axis2=2))
    return m / (d[:, :, None] * d[:, None, :])


def simulate(spec: SimulationSpec):
    """Draw (times, observations, truth) from the generative model."""
    n, q, k = spec.n_times, spec.n_outputs, spec.n_factors
    times = np.arange(1, n + 1, dtype=float)
    lambdas = gp_correlation_path(n, k, spec.gamma, rng_for(spec.seed, "sim-gp"))
    loading = block_diagonal_loading(q, k, rng_for(spec.seed, "sim-loading"))
    sigma = rng_for(spec.seed, "sim-sigma").uniform(0.5 * spec.s2, 1.5 * spec.s2, size=q)
    truth = SimulationTruth(loading=loading, sigma=sigma, lambdas=lambdas)

    rng = rng_for(spec.seed, "sim-obs")
    chols = spd_cholesky(lambdas, "factor correlation")
    f = np.einsum("nij,nj->ni", chols, rng.standard_normal((n, k)))
    eps = rng.standard_normal((n, q)) * np.sqrt(sigma)
    y = f @ loading.T + eps
    if spec.family == "student_t":
        w = rng.chisquare(spec.nu, size=n) / spec.nu
        y = y / np.sqrt(w)[:, None]
    return times, y, truth


def kl_gaussian(mu_p, sigma_p, mu_q, sigma_q) -> float:
    """KL(N(mu_p, sigma_p) || N(mu_q, sigma_q)); both covariances SPD."""
    mu_p = np.atleast_1d(np.asarray(mu_p, dtype=float))
    mu_q = np.atleast_1d(np.asarray(mu_q, dtype=float))
    sigma_p = np.atleast_2d(np.asarray(sigma_p, dtype=float))
    sigma_q = np.atleast_2d(np.asarray(sigma_q, dtype=float))
    d = mu_p.size
    chol_q = spd_cholesky(sigma_q, "second KL covariance")
    solve = np.linalg.solve
    half = solve(chol_q, sigma_p)
    trace = float(np.trace(solve(chol_q.T, half)))
    diff = solve(chol_q, mu_q - mu_p)
    quad = float(diff @ diff)
    logdet_q = 2.0 * float(np.sum(np.log(np.diag(chol_q))))
    sign_p, logdet_p = np.linalg.slogdet(sigma_p)
    if sign_p <= 0:
        raise ConfigError("first KL covariance must be positive definite")
    return 0.5 * (trace + quad - d + logdet_q - float(logdet_p))


def average_kl(truth_covs: np.ndarray, model_covs: np.ndarray) -> float:
    """Mean KL(truth_n || model_n) over a shared evaluation grid."""
    truth_covs = np.asarray(truth_covs, dtype=float)
    model_covs = np.asarray(model_covs, dtype=float)
    if truth_covs.shape != model_covs.shape:
        raise ConfigError("covariance stacks must share a shape")
    zero = np.zeros(truth_covs.shape[-1])
    return float(np.mean([
        kl_gaussian(zero, p, zero, q) for p, q in zip(truth_covs, model_covs)
    ]))
