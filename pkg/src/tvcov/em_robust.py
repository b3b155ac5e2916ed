"""ECM fitting of the Student's-t factor model via the scale-mixture trick.

One positive latent scale per time point multiplies both the factor and the
noise covariance; integrating it out gives a multivariate t marginal.  The
E-step adds a single scalar summary per observation, and the M-step stays
closed form.  Fits reduce bit-for-bit to the Gaussian ones when those
summaries are pinned at one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .basis import log_prior_basis
from .exceptions import InvalidParamsError, NumericError
from .linalg import spd_solve
from .params import SIGMA_FLOOR, FactorParams, Regularization, RobustExtras, validate_observations, validate_times
from .em_gaussian import (
    EStepStats,
    FitConfig,
    FitReport,
    _update_basis,
    e_step,
    initial_params,
    iw_log_prior,
)
from .weights import WeightScheme


@dataclass(frozen=True)
class RobustEStepStats(EStepStats):
    """Gaussian posterior moments plus the per-point scale summaries xi^2."""

    xi2: np.ndarray = None  # (N,)


def e_step_robust(
    obs: np.ndarray, times: np.ndarray, params: FactorParams, nu: float
) -> RobustEStepStats:
    """Gaussian E-step plus xi_n^2 = (nu + Q) / (nu + y^T S_n^{-1} y).

    The quadratic form reuses the Woodbury pieces already produced by the
    Gaussian E-step, so no Q x Q matrix is ever inverted.
    """
    if nu <= 0:
        raise InvalidParamsError("degrees of freedom must be positive")
    base = e_step(obs, times, params)
    q = np.asarray(obs).shape[1]
    xi2 = (nu + q) / (nu + base.quad)
    return RobustEStepStats(
        eta=base.eta, psi=base.psi, quad=base.quad, logdet_cov=base.logdet_cov,
        weights=base.weights, sigma_used=base.sigma_used, xi2=xi2,
    )


def m_step_robust(
    obs: np.ndarray,
    times: np.ndarray,
    stats: RobustEStepStats,
    scheme: WeightScheme,
    reg: Regularization = Regularization(),
) -> FactorParams:
    """Closed-form M-step with outliers downweighted through xi^2."""
    y = np.asarray(obs, dtype=float)
    n = y.shape[0]
    xi2 = stats.xi2
    outer = stats.eta[:, :, None] * stats.eta[:, None, :]
    second_scaled = xi2[:, None, None] * outer + stats.psi
    basis = _update_basis(second_scaled, stats.weights, reg)
    gram = second_scaled.sum(axis=0)
    cross = (y * xi2[:, None]).T @ stats.eta
    try:
        loading = spd_solve(gram, cross.T, "factor gram matrix").T
    except NumericError as exc:
        raise NumericError(
            "singular factor gram matrix in the loading update; "
            "inverse-wishart regularization may help"
        ) from exc
    resid = y - stats.eta @ loading.T
    quad_term = np.einsum("qi,nij,qj->nq", loading, stats.psi, loading, optimize=True)
    sigma = np.mean(xi2[:, None] * resid**2 + quad_term, axis=0)
    sigma = np.maximum(sigma, SIGMA_FLOOR)
    return FactorParams(loading=loading, basis=basis, scheme=scheme, sigma=sigma)


def observed_objective(
    q: int,
    times: np.ndarray,
    params: FactorParams,
    stats: EStepStats,
    nu: float,
    reg: Regularization = Regularization(),
) -> float:
    """Student-t log-likelihood of the data plus the basis log-prior(s)."""
    loglik = float(np.sum(
        gammaln(0.5 * (nu + q))
        - gammaln(0.5 * nu)
        - 0.5 * q * np.log(nu * np.pi)
        - 0.5 * stats.logdet_cov
        - 0.5 * (nu + q) * np.log1p(stats.quad / nu)
    ))
    total = loglik + log_prior_basis(params.basis, params.scheme, times)
    if reg.mode == "inverse-wishart":
        total += iw_log_prior(params.basis, reg)
    return total


def fit_robust(
    obs: np.ndarray,
    times: np.ndarray,
    scheme: WeightScheme,
    n_factors: int,
    config: FitConfig = FitConfig(),
    nu: float = 6.0,
    init: Optional[FactorParams] = None,
) -> tuple[FactorParams, RobustExtras, FitReport]:
    """Alternate robust E/M steps; the t-marginal objective never decreases.

    The degrees of freedom are fixed and given, not estimated.
    """
    times = validate_times(times)
    y = validate_observations(obs, times)
    if y.shape[0] < 2:
        raise InvalidParamsError("fitting requires at least two observations")
    if config.tv_sigma:
        raise InvalidParamsError("time-varying sigma is not supported in the robust model")
    params = init if init is not None else initial_params(
        y.shape[1], scheme, config, n_factors
    )
    report = FitReport()
    prev = -np.inf
    stats = None
    for it in range(config.max_iter):
        try:
            stats = e_step_robust(y, times, params, nu)
        except NumericError as exc:
            raise NumericError(f"E-step failed at iteration {it}: {exc}") from exc
        current = observed_objective(y.shape[1], times, params, stats, nu,
                                     config.regularization)
        report.trace.append(current)
        report.iterations = it + 1
        if np.isfinite(prev) and abs(current - prev) <= config.rel_tol * abs(prev):
            report.converged = True
            break
        prev = current
        try:
            params = m_step_robust(y, times, stats, scheme, config.regularization)
        except NumericError as exc:
            raise NumericError(f"M-step failed at iteration {it}: {exc}") from exc
    extras = RobustExtras(nu=nu, xi2=stats.xi2)
    return params, extras, report
