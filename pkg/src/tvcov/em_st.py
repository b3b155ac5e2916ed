"""ECM fitting of the matrix-variate (spatiotemporal) factor models.

Variant "a" drives the vectorized factors by one joint basis process of
dimension K_Q * K_P; variant "b" separates output-side and space-side
dynamics into a Kronecker product of two smaller processes.  Neither has a
joint closed-form M-step, but every conditional maximization is closed
form, executed in the fixed order gamma, lambda, phi, sigma, space loading,
output loading (variant "a" skips gamma), which keeps the ascent monotone.

Only (K_Q * K_P)-dimensional systems are factorized; the (Q * P)-dimensional
covariance is never formed during fitting.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .basis import BasisSet, combined_precision, log_prior_basis
from .exceptions import InvalidParamsError, NumericError
from .linalg import spd_inverse_and_logdet, spd_solve, symmetrize
from .params import SIGMA_FLOOR, STParams, validate_observations, validate_times
from .em_gaussian import FitConfig, FitReport
from .rng import rng_for
from .weights import WeightScheme

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class STEStepStats:
    """Posterior moments of the matrix factors plus likelihood byproducts.

    ``eta`` (N, K_Q, K_P) holds posterior means of the factor matrices;
    ``psi`` (N, K, K) with K = K_Q * K_P is the posterior covariance of the
    column-stacked factors.  ``psi_blocks`` exposes the K_Q x K_Q block at
    block position (i, j), i, j < K_P.
    """

    eta: np.ndarray
    psi: np.ndarray
    quad: np.ndarray
    logdet_cov: np.ndarray

    @property
    def psi_blocks(self) -> np.ndarray:
        """(N, K_P, K_P, K_Q, K_Q) view: blocks[n, i, j] = {psi_n}_{ij}."""
        n, k, _ = self.psi.shape
        kq = self.eta.shape[1]
        kp = self.eta.shape[2]
        return self.psi.reshape(n, kp, kq, kp, kq).transpose(0, 1, 3, 2, 4)


def _vec_columns(m: np.ndarray) -> np.ndarray:
    """Column-stacking vec of a batch of matrices: (N, A, B) -> (N, A*B)."""
    return np.swapaxes(m, -1, -2).reshape(m.shape[0], -1)


def _unvec_columns(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    return np.swapaxes(v.reshape(v.shape[0], cols, rows), -1, -2)


def _batched_kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """kron(a_n, b_n) for stacks (N, A, A) and (N, B, B)."""
    n, ka, _ = a.shape
    kb = b.shape[-1]
    out = np.einsum("nab,ncd->nacbd", a, b, optimize=True)
    return out.reshape(n, ka * kb, ka * kb)


def _prior_precision(params: STParams, times: np.ndarray) -> np.ndarray:
    """(N, K, K) precision of vec(f_n): Lambda^{-1} (a) or Gamma^{-1} x Lambda^{-1} (b)."""
    if params.variant == "a":
        w = params.scheme_joint.weight_matrix(times)
        return combined_precision(w, params.basis_joint.inverses())
    wl = params.scheme_out.weight_matrix(times)
    wg = params.scheme_space.weight_matrix(times)
    lam_prec = combined_precision(wl, params.basis_out.inverses())
    gam_prec = combined_precision(wg, params.basis_space.inverses())
    return _batched_kron(gam_prec, lam_prec)


def e_step_st(
    obs: np.ndarray, times: np.ndarray, params: STParams, variant: Optional[str] = None
) -> STEStepStats:
    """Posterior factor moments without forming any (Q*P)-dimensional inverse."""
    times = validate_times(times)
    y = validate_observations(obs, times)
    if y.ndim != 3:
        raise InvalidParamsError("spatiotemporal observations must be N x Q x P")
    if variant is not None and variant != params.variant:
        raise InvalidParamsError("requested variant does not match the parameters")
    b, c = params.loading_out, params.loading_space
    q, p = params.shape
    kq, kp = params.n_factors

    prior_prec = _prior_precision(params, times)
    _, prior_neg_logdet = spd_inverse_and_logdet(prior_prec, "factor prior precision")
    gb = (b / params.sigma[:, None]).T @ b  # B^T Sigma^{-1} B
    gc = (c / params.phi[:, None]).T @ c  # C^T Phi^{-1} C
    noise_info = np.kron(gc, gb)
    m_prec = prior_prec + noise_info
    psi, m_logdet = spd_inverse_and_logdet(m_prec, "posterior factor precision")
    psi = symmetrize(psi)

    # M_n = B^T Sigma^{-1} y_n Phi^{-1} C, shape (N, K_Q, K_P)
    proj = np.einsum("qa,nqp,pk->nak", b / params.sigma[:, None], y,
                     c / params.phi[:, None], optimize=True)
    m_vec = _vec_columns(proj)
    eta_vec = np.einsum("nij,nj->ni", psi, m_vec)
    eta = _unvec_columns(eta_vec, kq, kp)

    quad_full = np.einsum("nqp,q,p->n", y * y, 1.0 / params.sigma, 1.0 / params.phi,
                          optimize=True)
    quad = quad_full - np.sum(m_vec * eta_vec, axis=1)
    logdet_noise = q * np.sum(np.log(params.phi)) + p * np.sum(np.log(params.sigma))
    logdet_cov = logdet_noise - prior_neg_logdet + m_logdet
    return STEStepStats(eta=eta, psi=psi, quad=quad, logdet_cov=logdet_cov)


def _basis_average(weights: np.ndarray, contrib: np.ndarray, divisor: float) -> np.ndarray:
    """sum_n w_{nd} contrib_n / (divisor * sum_n w_{nd}), batched over d."""
    denom = divisor * np.sum(weights, axis=0)
    if np.any(denom <= 0):
        raise NumericError("a basis receives zero total weight")
    k = contrib.shape[-1]
    numer = np.tensordot(weights.T, contrib.reshape(contrib.shape[0], -1), axes=1)
    return symmetrize(numer.reshape(-1, k, k) / denom[:, None, None])


def ecm_step_st(
    obs: np.ndarray,
    times: np.ndarray,
    stats: STEStepStats,
    params: STParams,
    freeze: frozenset = frozenset(),
) -> STParams:
    """One full sweep of conditional maximizations in the canonical order.

    ``freeze`` may contain "space_loading", "phi", "space_basis" to pin
    those blocks (used e.g. when P = 1 makes them unidentifiable).
    """
    times = validate_times(times)
    y = validate_observations(obs, times)
    b, c = params.loading_out, params.loading_space
    sigma, phi = params.sigma, params.phi
    q, p = params.shape
    kq, kp = params.n_factors
    n = y.shape[0]
    eta = stats.eta
    blocks = stats.psi_blocks  # (N, K_P, K_P, K_Q, K_Q)
    sum_blocks = blocks.sum(axis=0)  # (K_P, K_P, K_Q, K_Q)

    basis_joint = params.basis_joint
    basis_out = params.basis_out
    basis_space = params.basis_space

    if params.variant == "b":
        wl = params.scheme_out.weight_matrix(times)
        wg = params.scheme_space.weight_matrix(times)
        lam_prec_old = combined_precision(wl, params.basis_out.inverses())
        # gamma update (old Lambda)
        if "space_basis" not in freeze:
            t_mat = np.einsum("nai,nab,nbj->nij", eta, lam_prec_old, eta, optimize=True)
            t_mat = t_mat + np.einsum("nijab,nba->nij", blocks, lam_prec_old, optimize=True)
            basis_space = BasisSet(_basis_average(wg, t_mat, float(kq)))
        gam_prec_new = combined_precision(wg, basis_space.inverses())
        # lambda update (new Gamma)
        w_mat = np.einsum("nai,nij,nbj->nab", eta, gam_prec_new, eta, optimize=True)
        w_mat = w_mat + np.einsum("nij,nijab->nab", gam_prec_new, blocks, optimize=True)
        basis_out = BasisSet(_basis_average(wl, w_mat, float(kp)))
    else:
        wj = params.scheme_joint.weight_matrix(times)
        eta_vec = _vec_columns(eta)
        second = eta_vec[:, :, None] * eta_vec[:, None, :] + stats.psi
        basis_joint = BasisSet(_basis_average(wj, second, 1.0))

    resid = y - np.einsum("qa,nak,pk->nqp", b, eta, c, optimize=True)

    # phi update: old loadings and sigma
    if "phi" not in freeze:
        gb_old = (b / sigma[:, None]).T @ b
        tr_term = np.einsum("ijab,ba->ij", sum_blocks, gb_old, optimize=True)
        phi_new = (
            np.einsum("nqp,q->p", resid**2, 1.0 / sigma, optimize=True)
            + np.einsum("pi,pj,ij->p", c, c, tr_term, optimize=True)
        ) / (q * n)
        phi_new = np.maximum(phi_new, SIGMA_FLOOR)
    else:
        phi_new = phi

    # sigma update: new phi, old loadings
    a_cpc = (c / phi_new[:, None]).T @ c  # C^T Phi_new^{-1} C
    mix = np.einsum("ij,ijab->ab", a_cpc, sum_blocks, optimize=True)
    sigma_new = (
        np.einsum("nqp,p->q", resid**2, 1.0 / phi_new, optimize=True)
        + np.einsum("qa,qb,ab->q", b, b, mix, optimize=True)
    ) / (p * n)
    sigma_new = np.maximum(sigma_new, SIGMA_FLOOR)

    # space loading update: new sigma, old output loading
    if "space_loading" not in freeze:
        gb_new = (b / sigma_new[:, None]).T @ b
        data_c = np.einsum("nqp,qa,nak->pk", y, b / sigma_new[:, None], eta, optimize=True)
        gram_c = np.einsum("nai,ab,nbj->ij", eta, gb_new, eta, optimize=True)
        gram_c = gram_c + np.einsum("ijab,ba->ij", sum_blocks, gb_new, optimize=True)
        c_new = spd_solve(symmetrize(gram_c), data_c.T, "space-loading gram").T
    else:
        c_new = c

    # output loading update: new space loading and phi
    a_new = (c_new / phi_new[:, None]).T @ c_new
    data_b = np.einsum("nqp,pk,nak->qa", y, c_new / phi_new[:, None], eta, optimize=True)
    gram_b = np.einsum("nai,ij,nbj->ab", eta, a_new, eta, optimize=True)
    gram_b = gram_b + np.einsum("ij,ijab->ab", a_new, sum_blocks, optimize=True)
    b_new = spd_solve(symmetrize(gram_b), data_b.T, "output-loading gram").T

    return STParams(
        loading_out=b_new, loading_space=c_new, sigma=sigma_new, phi=phi_new,
        variant=params.variant,
        basis_joint=basis_joint, scheme_joint=params.scheme_joint,
        basis_out=basis_out, scheme_out=params.scheme_out,
        basis_space=basis_space, scheme_space=params.scheme_space,
    )


def log_joint_st(obs: np.ndarray, times: np.ndarray, params: STParams) -> float:
    """Marginal log-likelihood plus the dimension-scaled basis log-priors."""
    stats = e_step_st(obs, times, params)
    return _joint_from_stats(obs, times, params, stats)


def _joint_from_stats(obs, times, params: STParams, stats: STEStepStats) -> float:
    qp = obs.shape[1] * obs.shape[2]
    loglik = float(np.sum(-0.5 * (qp * LOG_2PI + stats.logdet_cov + stats.quad)))
    if params.variant == "a":
        return loglik + log_prior_basis(params.basis_joint, params.scheme_joint, times)
    kq, kp = params.n_factors
    return (
        loglik
        + log_prior_basis(params.basis_out, params.scheme_out, times, scale=float(kp))
        + log_prior_basis(params.basis_space, params.scheme_space, times, scale=float(kq))
    )


def initial_st_params(
    shape: tuple[int, int],
    n_factors: tuple[int, int],
    variant: str,
    config: FitConfig,
    scheme_joint: Optional[WeightScheme] = None,
    scheme_out: Optional[WeightScheme] = None,
    scheme_space: Optional[WeightScheme] = None,
) -> STParams:
    q, p = shape
    kq, kp = n_factors
    rng = rng_for(config.seed, "init-loading-st")
    b0 = config.init_loading_scale * rng.standard_normal((q, kq))
    c0 = config.init_loading_scale * rng.standard_normal((p, kp))
    if variant == "a":
        if scheme_joint is None:
            raise InvalidParamsError("variant 'a' requires a joint weight scheme")
        return STParams(
            loading_out=b0, loading_space=c0, sigma=np.ones(q), phi=np.ones(p),
            variant="a",
            basis_joint=BasisSet.identity(scheme_joint.n_bases, kq * kp),
            scheme_joint=scheme_joint,
        )
    if scheme_out is None or scheme_space is None:
        raise InvalidParamsError("variant 'b' requires both weight schemes")
    return STParams(
        loading_out=b0, loading_space=c0, sigma=np.ones(q), phi=np.ones(p),
        variant="b",
        basis_out=BasisSet.identity(scheme_out.n_bases, kq),
        scheme_out=scheme_out,
        basis_space=BasisSet.identity(scheme_space.n_bases, kp),
        scheme_space=scheme_space,
    )


def normalize_scale(params: STParams) -> STParams:
    """Fix the Kronecker scale: geometric mean of phi becomes 1, absorbed in sigma."""
    g = float(np.exp(np.mean(np.log(params.phi))))
    return STParams(
        loading_out=params.loading_out, loading_space=params.loading_space,
        sigma=params.sigma * g, phi=params.phi / g, variant=params.variant,
        basis_joint=params.basis_joint, scheme_joint=params.scheme_joint,
        basis_out=params.basis_out, scheme_out=params.scheme_out,
        basis_space=params.basis_space, scheme_space=params.scheme_space,
    )


def fit_st(
    obs: np.ndarray,
    times: np.ndarray,
    n_factors: tuple[int, int],
    config: FitConfig = FitConfig(),
    variant: str = "b",
    scheme_joint: Optional[WeightScheme] = None,
    scheme_out: Optional[WeightScheme] = None,
    scheme_space: Optional[WeightScheme] = None,
    init: Optional[STParams] = None,
    freeze: frozenset = frozenset(),
) -> tuple[STParams, FitReport]:
    """Alternate the E-step with full conditional-maximization sweeps."""
    times = validate_times(times)
    y = validate_observations(obs, times)
    if y.ndim != 3:
        raise InvalidParamsError("spatiotemporal observations must be N x Q x P")
    params = init if init is not None else initial_st_params(
        (y.shape[1], y.shape[2]), n_factors, variant, config,
        scheme_joint, scheme_out, scheme_space,
    )
    report = FitReport()
    prev = -np.inf
    for it in range(config.max_iter):
        try:
            stats = e_step_st(y, times, params)
        except NumericError as exc:
            raise NumericError(f"E-step failed at iteration {it}: {exc}") from exc
        current = _joint_from_stats(y, times, params, stats)
        report.trace.append(current)
        report.iterations = it + 1
        if np.isfinite(prev) and abs(current - prev) <= config.rel_tol * abs(prev):
            report.converged = True
            break
        prev = current
        try:
            params = ecm_step_st(y, times, stats, params, freeze)
        except NumericError as exc:
            raise NumericError(f"CM sweep failed at iteration {it}: {exc}") from exc
    if "phi" not in freeze:
        params = normalize_scale(params)
    return params, report
