"""EM fitting of the Gaussian factor model with basis-covariance dynamics.

The heteroscedastic model uses D > 1 bases; the homoscedastic special case
is exactly D = 1 (same code path).  The M-step is closed form; switching on
time-varying idiosyncratic variances replaces it with two conditional
maximization steps, which keeps the ascent monotone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .basis import BasisSet, combined_precision, log_prior_basis, log_prior_scalar
from .exceptions import InvalidParamsError, NumericError
from .linalg import spd_inverse_and_logdet, spd_logdet, spd_solve, symmetrize
from .params import SIGMA_FLOOR, FactorParams, Regularization, validate_observations, validate_times
from .rng import rng_for
from .weights import WeightScheme

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class EStepStats:
    """Posterior factor moments plus byproducts reused by the objective.

    ``eta`` (N, K) are posterior means, ``psi`` (N, K, K) posterior
    covariances.  The remaining fields are cached pieces of the marginal
    likelihood at the parameters the E-step was run with.
    """

    eta: np.ndarray
    psi: np.ndarray
    quad: np.ndarray  # y^T S^{-1} y per point
    logdet_cov: np.ndarray  # log|B Lam B^T + Sigma| per point
    weights: np.ndarray  # (N, D) weight matrix used
    sigma_used: np.ndarray  # (N, Q) noise variances used

    @property
    def second_moment(self) -> np.ndarray:
        """eta eta^T + psi, shape (N, K, K)."""
        return self.eta[:, :, None] * self.eta[:, None, :] + self.psi


@dataclass(frozen=True)
class FitConfig:
    max_iter: int = 500
    rel_tol: float = 1e-6
    seed: int = 0
    regularization: Regularization = field(default_factory=Regularization)
    tv_sigma: bool = False
    init_loading_scale: float = 1e-3

    def __post_init__(self):
        if self.max_iter < 1:
            raise InvalidParamsError("max_iter must be at least 1")
        if self.rel_tol <= 0:
            raise InvalidParamsError("rel_tol must be positive")


@dataclass
class FitReport:
    trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    bandwidth_trace: list = field(default_factory=list)


def _sigma_matrix(params: FactorParams, times: np.ndarray) -> np.ndarray:
    """Noise variances as an (N, Q) array, whatever the representation."""
    if params.sigma is not None:
        return np.broadcast_to(params.sigma, (times.size, params.n_outputs))
    return np.asarray(params.sigma_at(times), dtype=float)


def e_step(obs: np.ndarray, times: np.ndarray, params: FactorParams) -> EStepStats:
    """Closed-form posterior of the latent factors given current parameters.

    psi_n = (Lambda_{t_n}^{-1} + B^T Sigma^{-1} B)^{-1} and
    eta_n = psi_n B^T Sigma^{-1} y_n.
    """
    times = validate_times(times)
    y = validate_observations(obs, times)
    b = params.loading
    w = params.scheme.weight_matrix(times)
    lam_prec = combined_precision(w, params.basis.inverses())  # (N, K, K)
    lam_neg_logdet = spd_logdet(lam_prec, "accumulated basis precision")
    sigma = _sigma_matrix(params, times)
    inv_sigma = 1.0 / sigma
    if params.sigma is not None:
        bt_sig_b = (b * inv_sigma[0][:, None]).T @ b  # (K, K), constant over n
        m = lam_prec + bt_sig_b
    else:
        bt_sig_b = np.einsum("qi,nq,qj->nij", b, inv_sigma, b, optimize=True)
        m = lam_prec + bt_sig_b
    psi, m_logdet = spd_inverse_and_logdet(m, "posterior factor precision")
    psi = symmetrize(psi)
    z = (y * inv_sigma) @ b  # (N, K)
    eta = np.einsum("nij,nj->ni", psi, z)
    quad = np.sum(y * y * inv_sigma, axis=1) - np.sum(z * eta, axis=1)
    logdet_cov = np.sum(np.log(sigma), axis=1) - lam_neg_logdet + m_logdet
    return EStepStats(eta=eta, psi=psi, quad=quad, logdet_cov=logdet_cov,
                      weights=w, sigma_used=sigma)


def _update_basis(
    second: np.ndarray,
    weights: np.ndarray,
    reg: Regularization,
) -> BasisSet:
    """Basis M-step: per-basis weighted average of factor second moments."""
    k = second.shape[-1]
    numer = np.tensordot(weights.T, second.reshape(second.shape[0], -1), axes=1)
    numer = numer.reshape(-1, k, k)
    denom = np.sum(weights, axis=0)  # (D,)
    if reg.mode == "inverse-wishart":
        numer = numer + reg.theta_matrix(k)
        denom = denom + reg.map_denominator_offset(k)
    else:
        if np.any(denom <= 0):
            raise NumericError(
                "a basis receives zero total weight; use inverse-wishart "
                "regularization or widen the bandwidth"
            )
    mats = numer / denom[:, None, None]
    if reg.mode == "diagonal":
        d_idx = np.arange(k)
        diag_only = np.zeros_like(mats)
        diag_only[:, d_idx, d_idx] = mats[:, d_idx, d_idx]
        mats = diag_only
    return BasisSet(symmetrize(mats))


def m_step(
    obs: np.ndarray,
    times: np.ndarray,
    stats: EStepStats,
    scheme: WeightScheme,
    reg: Regularization = Regularization(),
) -> FactorParams:
    """Joint maximizer of the expected complete-data log posterior.

    Basis matrices are weighted averages of eta eta^T + psi; the loading
    solves one set of normal equations; sigma averages the squared
    residuals with the freshly updated loading.
    """
    y = np.asarray(obs, dtype=float)
    second = stats.second_moment
    basis = _update_basis(second, stats.weights, reg)
    gram = second.sum(axis=0)
    cross = y.T @ stats.eta  # (Q, K)
    try:
        loading = spd_solve(gram, cross.T, "factor gram matrix").T
    except NumericError as exc:
        raise NumericError(
            "singular factor gram matrix in the loading update; "
            "inverse-wishart regularization may help"
        ) from exc
    resid = y - stats.eta @ loading.T
    quad_term = np.einsum("qi,nij,qj->nq", loading, stats.psi, loading, optimize=True)
    sigma = np.mean(resid**2 + quad_term, axis=0)
    sigma = np.maximum(sigma, SIGMA_FLOOR)
    return FactorParams(loading=loading, basis=basis, scheme=scheme, sigma=sigma)


def cm_step_tv_sigma(
    obs: np.ndarray,
    times: np.ndarray,
    stats: EStepStats,
    scheme: WeightScheme,
    sigma_scheme: WeightScheme,
    reg: Regularization = Regularization(),
) -> FactorParams:
    """Conditional M-steps for the time-varying-sigma variant.

    Loading rows solve noise-weighted normal equations at the current
    sigma surface; the sigma basis scalars then average the residuals
    under the per-coordinate weight functions (with the new loading).
    """
    y = np.asarray(obs, dtype=float)
    q = y.shape[1]
    second = stats.second_moment
    basis = _update_basis(second, stats.weights, reg)

    inv_sig = 1.0 / stats.sigma_used  # (N, Q)
    gram_q = np.einsum("nq,nij->qij", inv_sig, second, optimize=True)  # (Q, K, K)
    cross_q = np.einsum("nq,ni->qi", y * inv_sig, stats.eta, optimize=True)
    loading = np.stack(
        [spd_solve(gram_q[j], cross_q[j], "noise-weighted gram") for j in range(q)]
    )

    w_tv = sigma_scheme.weight_matrix(np.asarray(times, dtype=float))  # (N, D_tv)
    totals = np.sum(w_tv, axis=0)
    if np.any(totals <= 0):
        raise NumericError("a sigma basis receives zero total weight")
    resid = y - stats.eta @ loading.T
    quad_term = np.einsum("qi,nij,qj->nq", loading, stats.psi, loading, optimize=True)
    contrib = resid**2 + quad_term  # (N, Q)
    nu = (w_tv.T @ contrib).T / totals  # (Q, D_tv)
    nu = np.maximum(nu, SIGMA_FLOOR)
    return FactorParams(
        loading=loading, basis=basis, scheme=scheme,
        sigma_basis=nu, sigma_scheme=sigma_scheme,
    )


def log_joint_posterior(
    obs: np.ndarray,
    times: np.ndarray,
    params: FactorParams,
    reg: Regularization = Regularization(),
) -> float:
    """Marginal log-likelihood plus the basis (and sigma / IW) log-priors."""
    stats = e_step(obs, times, params)
    return _joint_from_stats(np.asarray(obs).shape[1], times, params, stats, reg)


def _joint_from_stats(
    q: int,
    times: np.ndarray,
    params: FactorParams,
    stats: EStepStats,
    reg: Regularization,
) -> float:
    loglik = float(np.sum(-0.5 * (q * LOG_2PI + stats.logdet_cov + stats.quad)))
    total = loglik + log_prior_basis(params.basis, params.scheme, times)
    if params.time_varying_sigma:
        w_tv = params.sigma_scheme.weight_matrix(np.asarray(times, dtype=float))
        for jq in range(params.n_outputs):
            total += log_prior_scalar(params.sigma_basis[jq], w_tv)
    if reg.mode == "inverse-wishart":
        total += iw_log_prior(params.basis, reg)
    return total


def iw_log_prior(basis, reg: Regularization) -> float:
    """Unnormalized inverse-Wishart log prior summed over the basis set."""
    k = basis.dim
    theta = reg.theta_matrix(k)
    off = reg.map_denominator_offset(k)  # zeta + K + 1
    inv = basis.inverses()
    logdets = spd_logdet(basis.mats, "basis covariance")
    return float(np.sum(-0.5 * off * logdets - 0.5 * np.einsum("ij,dji->d", theta, inv)))


def initial_params(
    n_outputs: int,
    scheme: WeightScheme,
    config: FitConfig,
    n_factors: int,
    sigma_scheme: Optional[WeightScheme] = None,
) -> FactorParams:
    """Identity bases, unit noise, small random loading from the seed."""
    rng = rng_for(config.seed, "init-loading")
    loading = config.init_loading_scale * rng.standard_normal((n_outputs, n_factors))
    basis = BasisSet.identity(scheme.n_bases, n_factors)
    if config.tv_sigma:
        if sigma_scheme is None:
            raise InvalidParamsError("tv_sigma requires a sigma weight scheme")
        nu = np.ones((n_outputs, sigma_scheme.n_bases))
        return FactorParams(loading=loading, basis=basis, scheme=scheme,
                            sigma_basis=nu, sigma_scheme=sigma_scheme)
    return FactorParams(loading=loading, basis=basis, scheme=scheme,
                        sigma=np.ones(n_outputs))


def fit(
    obs: np.ndarray,
    times: np.ndarray,
    scheme: WeightScheme,
    n_factors: int,
    config: FitConfig = FitConfig(),
    sigma_scheme: Optional[WeightScheme] = None,
    init: Optional[FactorParams] = None,
) -> tuple[FactorParams, FitReport]:
    """Alternate E/M steps until the log joint posterior stalls.

    The trace records the joint evaluated at each iterate before its
    update; EM guarantees it never decreases.
    """
    times = validate_times(times)
    y = validate_observations(obs, times)
    if y.shape[0] < 2:
        raise InvalidParamsError("fitting requires at least two observations")
    if config.tv_sigma and sigma_scheme is None:
        sigma_scheme = WeightScheme.from_times(times, _default_tv_bandwidth(times))
    params = init if init is not None else initial_params(
        y.shape[1], scheme, config, n_factors, sigma_scheme
    )
    if config.tv_sigma and not params.time_varying_sigma:
        raise InvalidParamsError(
            "tv_sigma fitting requires parameters with a sigma basis"
        )
    report = FitReport()
    prev = -np.inf
    for it in range(config.max_iter):
        try:
            stats = e_step(y, times, params)
        except NumericError as exc:
            raise NumericError(f"E-step failed at iteration {it}: {exc}") from exc
        current = _joint_from_stats(y.shape[1], times, params, stats, config.regularization)
        report.trace.append(current)
        report.iterations = it + 1
        if np.isfinite(prev) and abs(current - prev) <= config.rel_tol * abs(prev):
            report.converged = True
            break
        prev = current
        try:
            if config.tv_sigma:
                params = cm_step_tv_sigma(y, times, stats, scheme,
                                          params.sigma_scheme, config.regularization)
            else:
                params = m_step(y, times, stats, scheme, config.regularization)
        except NumericError as exc:
            raise NumericError(f"M-step failed at iteration {it}: {exc}") from exc
    return params, report


def _default_tv_bandwidth(times: np.ndarray) -> float:
    span = float(times[-1] - times[0]) if times.size > 1 else 1.0
    return max(span / 4.0, 1e-6)
