"""Bandwidth and factor-count selection.

Bandwidths cannot be chosen by the training likelihood (smaller is always
better in-sample), so each candidate is scored by a leave-one-out surrogate:
every point is removed from the basis averages through one rank-one
Sherman-Morrison downdate of the sampled second-moment matrices, and the
held-out point is scored under the resulting covariance.  The factor count
is chosen by repeated train/validate splits of the data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from .densities import gaussian_logpdf_lowrank, log_density, student_t_logpdf_lowrank
from .exceptions import ConfigError, InvalidParamsError, NumericError, TvcovError
from .linalg import spd_inverse, spd_inverse_and_logdet, spd_logdet
from .params import FactorParams, validate_observations, validate_times
from .em_gaussian import EStepStats, FitConfig, FitReport, e_step, fit, initial_params, m_step
from .em_robust import e_step_robust, fit_robust, m_step_robust
from .rng import rng_for
from .weights import WeightScheme

_EPS = 1e-30


@dataclass(frozen=True)
class SplitPlan:
    """How to carve validation sets out of the observed series."""

    mode: str = "random"
    ratio: float = 0.1
    count: int = 12
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("random", "blockwise"):
            raise ConfigError(f"unknown split mode {self.mode!r}")
        if not 0.0 < self.ratio < 1.0:
            raise ConfigError("validation ratio must be in (0, 1)")
        if self.count < 1:
            raise ConfigError("at least one split is required")

    def indices(self, n: int) -> list[tuple[np.ndarray, np.ndarray]]:
        """(train_idx, val_idx) pairs; identical for identical plan + seed."""
        n_val = max(1, int(round(self.ratio * n)))
        if n_val >= n:
            raise ConfigError("validation fraction leaves no training data")
        out = []
        for s in range(self.count):
            if self.mode == "random":
                rng = rng_for(self.seed, "split", s)
                val = np.sort(rng.choice(n, size=n_val, replace=False))
            else:
                span = n - n_val
                start = (s * span) // max(self.count - 1, 1)
                val = np.arange(start, start + n_val)
            train = np.setdiff1d(np.arange(n), val)
            out.append((train, val))
        return out


@dataclass
class SelectionResult:
    k_hat: int
    h_hat: Optional[float]
    v_table: dict
    per_split: dict
    params: Optional[FactorParams] = None
    fit_report: Optional[FitReport] = None
    failures: list = field(default_factory=list)


def default_bandwidth_grid(times: np.ndarray, size: int = 16) -> np.ndarray:
    """Log-spaced candidates from the smallest time gap to the full range."""
    times = validate_times(times)
    if times.size < 2:
        raise ConfigError("bandwidth grid requires at least two time points")
    gaps = np.diff(times)
    lo = float(np.min(gaps))
    hi = float(times[-1] - times[0])
    if size == 1:
        return np.array([hi])
    return np.geomspace(lo, hi, size)


def sample_factor_draws(
    stats: EStepStats, seed: int = 0, index: int = 0, deterministic: bool = False
) -> np.ndarray:
    """One draw per point from N(eta_n, psi_n), or the means when deterministic."""
    if deterministic:
        return stats.eta.copy()
    rng = rng_for(seed, "loo-draws", index)
    chol = np.linalg.cholesky(stats.psi)
    z = rng.standard_normal(stats.eta.shape)
    return stats.eta + np.einsum("nij,nj->ni", chol, z)


def _downdate_pieces(draws: np.ndarray, weights: np.ndarray):
    """Shared Sherman-Morrison quantities for all (basis, point) pairs.

    Returns (lam_tilde_inv (D,K,K), coef_base (D,N), coef_rank1 (D,N),
    u (D,N,K), ok (D,N)) such that the downdated combined precision at
    point n is ``sum_d coef_base[d,n] lam_tilde_inv[d] +
    sum_d coef_rank1[d,n] u[d,n] u[d,n]^T`` over the bases with ok.
    """
    n, k = draws.shape
    w = weights  # (N, D)
    totals = np.sum(w, axis=0)  # (D,)
    outer = draws[:, :, None] * draws[:, None, :]
    lam_tilde = np.tensordot(w.T, outer.reshape(n, -1), axes=1).reshape(-1, k, k)
    lam_tilde = lam_tilde / np.maximum(totals, _EPS)[:, None, None]
    # a basis with zero total weight contributes nowhere; keep it invertible
    dead = totals <= 0
    if np.any(dead):
        lam_tilde[dead] = np.eye(k)
    lam_tilde_inv = spd_inverse(lam_tilde, "sampled basis average")
    u = np.einsum("dij,nj->dni", lam_tilde_inv, draws, optimize=True)
    kappa = np.einsum("dni,ni->dn", u, draws, optimize=True)
    wt = w.T  # (D, N)
    remain = totals[:, None] - wt  # S_d - w_d(t_n)
    gamma = wt / np.maximum(totals, _EPS)[:, None]
    sm_denom = 1.0 - gamma * kappa
    ok = (remain > 0) & (sm_denom > 1e-12)  # a vanishing denominator means a
    # singular downdate; treat it as destroying positive definiteness
    inv_a = remain / np.maximum(totals, _EPS)[:, None]  # 1 / a_{dn}
    coef_base = wt * inv_a
    coef_rank1 = wt * gamma * inv_a / np.where(sm_denom > 0, sm_denom, 1.0)
    return lam_tilde_inv, coef_base, coef_rank1, u, ok


def loo_basis_downdate(
    stats: EStepStats,
    scheme: WeightScheme,
    times: np.ndarray,
    n: int,
    draws: Optional[np.ndarray] = None,
):
    """Downdated inverses ``lam_tilde_{d,n}^{-1}`` for one removed point.

    Returns ``(inverses (D,K,K), ok (D,))``; a False entry means the
    rank-one removal destroyed positive definiteness (or exhausted a basis)
    and the point should be skipped.
    """
    if draws is None:
        draws = stats.eta
    w = scheme.weight_matrix(np.asarray(times, dtype=float))
    lam_tilde_inv, coef_base, coef_rank1, u, ok = _downdate_pieces(draws, w)
    wt_n = w[n]  # (D,)
    safe = np.maximum(wt_n, _EPS)
    inv_dn = (coef_base[:, n][:, None, None] * lam_tilde_inv
              + coef_rank1[:, n][:, None, None] * u[:, n, :, None] * u[:, n, None, :])
    inv_dn = inv_dn / safe[:, None, None]
    # zero-weight bases are untouched by the removal
    untouched = wt_n <= _EPS
    inv_dn[untouched] = lam_tilde_inv[untouched]
    return inv_dn, ok[:, n] | untouched


def _downdated_precisions(draws: np.ndarray, weights: np.ndarray):
    """Per-point downdated combined precision ``Lambda~(t_n)^{-1}`` + skip mask."""
    lam_tilde_inv, coef_base, coef_rank1, u, ok = _downdate_pieces(draws, weights)
    keep = np.all(ok | (weights.T <= _EPS), axis=0)  # (N,)
    prec = np.einsum("dn,dij->nij", coef_base, lam_tilde_inv, optimize=True)
    v = np.sqrt(np.maximum(coef_rank1, 0.0))[:, :, None] * u  # (D, N, K)
    prec += np.matmul(v.transpose(1, 2, 0), v.transpose(1, 0, 2))
    return prec, keep


def _downdated_lambdas(draws: np.ndarray, weights: np.ndarray):
    """Per-point downdated covariance ``Lambda~(t_n)`` and a skip mask."""
    prec, keep = _downdated_precisions(draws, weights)
    lam = spd_inverse(prec[keep], "downdated combined precision")
    return lam, keep


def bandwidth_objective(
    obs: np.ndarray,
    times: np.ndarray,
    params: FactorParams,
    h0: float,
    draws: Optional[np.ndarray] = None,
    stats: Optional[EStepStats] = None,
    seed: int = 0,
    draw_index: int = 0,
    deterministic: bool = False,
    family: str = "gaussian",
    nu: Optional[float] = None,
) -> float:
    """Leave-one-out predictive score of a candidate shared bandwidth.

    Each training point is scored under the fitted loading and noise but
    with the basis process rebuilt (at bandwidth ``h0``) from sampled
    factor outer products with that point removed.  Points whose removal
    destroys positive definiteness are recorded and excluded.
    """
    times = validate_times(times)
    y = validate_observations(obs, times)
    if y.shape[0] < 2:
        raise InvalidParamsError("leave-one-out scoring requires at least two points")
    if h0 <= 0:
        raise ConfigError("candidate bandwidth must be positive")
    if draws is None:
        if stats is None:
            stats = e_step(y, times, params)
        draws = sample_factor_draws(stats, seed, draw_index, deterministic)
    scheme_h = params.scheme.with_bandwidth(h0)
    w = scheme_h.weight_matrix(times)
    lam, keep = _downdated_lambdas(draws, w)
    if not np.any(keep):
        return -np.inf
    sigma = params.sigma if params.sigma is not None else params.sigma_at(times)
    sigma_kept = sigma[keep] if np.ndim(sigma) == 2 else sigma
    if family == "gaussian":
        scores = gaussian_logpdf_lowrank(y[keep], params.loading, lam, sigma_kept)
    else:
        scores = student_t_logpdf_lowrank(y[keep], params.loading, lam, sigma_kept, nu)
    return float(np.sum(scores))


def _grid_scores_fast(obs, times, params, grid, draws, family, nu) -> np.ndarray:
    """Leave-one-out scores for every candidate, sharing all invariants.

    Constant-sigma fast path: the noise-side quantities do not depend on
    the candidate, so only the downdated precisions and two batched
    factorizations are rebuilt per grid entry.
    """
    from scipy.special import gammaln

    y = np.asarray(obs, dtype=float)
    n, q = y.shape
    b = params.loading
    sigma = params.sigma
    inv_sigma = 1.0 / sigma
    btsb = (b * inv_sigma[:, None]).T @ b
    z = (y * inv_sigma) @ b
    quad_full = (y * y) @ inv_sigma
    sum_log_sigma = float(np.sum(np.log(sigma)))
    scores = np.empty(len(grid))
    for g, h0 in enumerate(grid):
        w = params.scheme.with_bandwidth(float(h0)).weight_matrix(times)
        prec, keep = _downdated_precisions(draws, w)
        if not np.any(keep):
            scores[g] = -np.inf
            continue
        prec = prec[keep]
        lam_neg_logdet = spd_logdet(prec, "downdated combined precision")
        m = prec + btsb
        m_inv, m_logdet = spd_inverse_and_logdet(m, "posterior factor precision")
        zk = z[keep]
        quad = quad_full[keep] - np.einsum("ni,nij,nj->n", zk, m_inv, zk,
                                           optimize=True)
        logdet = sum_log_sigma - lam_neg_logdet + m_logdet
        if family == "gaussian":
            vals = -0.5 * (q * np.log(2 * np.pi) + logdet + quad)
        else:
            vals = (gammaln(0.5 * (nu + q)) - gammaln(0.5 * nu)
                    - 0.5 * q * np.log(nu * np.pi) - 0.5 * logdet
                    - 0.5 * (nu + q) * np.log1p(quad / nu))
        scores[g] = float(np.sum(vals))
    return scores


def _best_bandwidth(
    obs, times, params, grid, stats, seed, draw_index, deterministic, family, nu
) -> float:
    draws = sample_factor_draws(stats, seed, draw_index, deterministic)
    grid = np.sort(np.asarray(grid, dtype=float))
    if params.sigma is not None:
        scores = _grid_scores_fast(obs, times, params, grid, draws, family, nu)
    else:
        scores = np.array([
            bandwidth_objective(obs, times, params, h0, draws=draws,
                                family=family, nu=nu)
            for h0 in grid
        ])
    return float(grid[int(np.argmax(scores))])  # ties resolve to smaller h0


def fit_dynamic_bandwidth(
    obs: np.ndarray,
    times: np.ndarray,
    n_factors: int,
    grid,
    config: FitConfig = FitConfig(),
    family: str = "gaussian",
    nu: Optional[float] = None,
    refresh: int = 1,
    deterministic_draws: bool = False,
):
    """EM with the shared bandwidth re-selected from the grid as it runs.

    ``refresh`` sets how many EM iterations pass between re-selections
    (1 re-selects every iteration).  Returns (params, report, h_hat) and,
    for the robust family, the extras as a fourth element.
    """
    times = validate_times(times)
    y = validate_observations(obs, times)
    grid = np.sort(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ConfigError("bandwidth grid must be nonempty")
    if family not in ("gaussian", "student_t"):
        raise ConfigError(f"unknown family {family!r}")
    robust = family == "student_t"
    if robust and nu is None:
        raise ConfigError("student_t family requires nu")

    h_current = float(grid[-1])  # start smooth, adapt downward
    scheme = WeightScheme.from_times(times, h_current)
    params = initial_params(y.shape[1], scheme, config, n_factors)
    report = FitReport()
    prev = -np.inf
    stats = None
    from .em_gaussian import _joint_from_stats  # local to avoid cycle at import
    from .em_robust import observed_objective

    for it in range(config.max_iter):
        stats = e_step_robust(y, times, params, nu) if robust else e_step(y, times, params)
        if it % max(refresh, 1) == 0 and grid.size > 1:
            h_new = _best_bandwidth(y, times, params, grid, stats, config.seed, it,
                                    deterministic_draws, family, nu)
            if h_new != h_current:
                h_current = h_new
                scheme = WeightScheme.from_times(times, h_current)
                params = FactorParams(loading=params.loading,
                                      basis=params.basis, scheme=scheme,
                                      sigma=params.sigma)
                stats = (e_step_robust(y, times, params, nu) if robust
                         else e_step(y, times, params))
        report.bandwidth_trace.append(h_current)
        if robust:
            current = observed_objective(y.shape[1], times, params, stats, nu,
                                         config.regularization)
        else:
            current = _joint_from_stats(y.shape[1], times, params, stats,
                                        config.regularization)
        report.trace.append(current)
        report.iterations = it + 1
        if np.isfinite(prev) and abs(current - prev) <= config.rel_tol * abs(prev):
            report.converged = True
            break
        prev = current
        if robust:
            params = m_step_robust(y, times, stats, scheme, config.regularization)
        else:
            params = m_step(y, times, stats, scheme, config.regularization)
    if robust:
        q = y.shape[1]
        xi2 = (nu + q) / (nu + stats.quad)
        from .params import RobustExtras
        return params, report, h_current, RobustExtras(nu=nu, xi2=xi2)
    return params, report, h_current


def select_bandwidth(
    obs: np.ndarray,
    times: np.ndarray,
    n_factors: int,
    grid,
    dynamic: bool = True,
    config: FitConfig = FitConfig(),
    family: str = "gaussian",
    nu: Optional[float] = None,
    refresh: int = 1,
) -> float:
    """Pick the shared bandwidth from a candidate grid (ties -> smaller h0).

    Dynamic mode (the default) re-selects the bandwidth as the EM runs;
    static mode runs one full fit per candidate and scores each with the
    leave-one-out objective at its own bandwidth.
    """
    grid = np.sort(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ConfigError("bandwidth grid must be nonempty")
    if grid.size == 1:
        return float(grid[0])
    if dynamic:
        out = fit_dynamic_bandwidth(obs, times, n_factors, grid, config,
                                    family, nu, refresh)
        return float(out[2])
    times = validate_times(times)
    scores = []
    for h0 in grid:
        scheme = WeightScheme.from_times(times, float(h0))
        if family == "student_t":
            params, _, _ = fit_robust(obs, times, scheme, n_factors, config, nu)
        else:
            params, _ = fit(obs, times, scheme, n_factors, config)
        scores.append(bandwidth_objective(obs, times, params, float(h0),
                                          seed=config.seed, family=family, nu=nu))
    return float(grid[int(np.argmax(scores))])


def validation_score(
    held_obs: np.ndarray,
    held_times: np.ndarray,
    params: FactorParams,
    family: str = "gaussian",
    nu: Optional[float] = None,
) -> float:
    """Sum of held-out log-densities under the fitted marginal model.

    Held-out times may fall outside the training range; the weight
    functions extrapolate.  An empty validation set scores zero.
    """
    held_times = np.atleast_1d(np.asarray(held_times, dtype=float))
    if held_times.size == 0:
        return 0.0
    y = np.atleast_2d(np.asarray(held_obs, dtype=float))
    return float(np.sum(log_density(y, held_times, params, family, nu)))


def _fit_one_split(obs, times, k, train, config, family, nu, grid,
                   homoscedastic, refresh):
    if homoscedastic:
        scheme = WeightScheme.single()
        if family == "student_t":
            params, _, _ = fit_robust(obs[train], times[train], scheme, k, config, nu)
        else:
            params, _ = fit(obs[train], times[train], scheme, k, config)
        return params, None
    out = fit_dynamic_bandwidth(obs[train], times[train], k, grid, config,
                                family, nu, refresh)
    return out[0], float(out[2])


def _split_job(obs, times, k, split_index, train, val, config, family, nu,
               grid, homoscedastic, refresh):
    job_config = FitConfig(
        max_iter=config.max_iter, rel_tol=config.rel_tol,
        seed=int(rng_for(config.seed, f"fit-k{k}", split_index).integers(2**31 - 1)),
        regularization=config.regularization, tv_sigma=config.tv_sigma,
        init_loading_scale=config.init_loading_scale,
    )
    try:
        params, h_used = _fit_one_split(obs, times, k, train, job_config,
                                        family, nu, grid, homoscedastic, refresh)
        score = validation_score(obs[val], times[val], params, family, nu)
        if not np.isfinite(score):
            raise NumericError("non-finite validation score")
        return k, split_index, score, h_used, None
    except TvcovError as exc:
        return k, split_index, None, None, str(exc)


def select_K(
    obs: np.ndarray,
    times: np.ndarray,
    candidates,
    plan: SplitPlan = SplitPlan(),
    config: FitConfig = FitConfig(),
    family: str = "gaussian",
    nu: Optional[float] = None,
    bandwidth_grid=None,
    homoscedastic: bool = False,
    refresh: int = 1,
    n_jobs: int = 1,
    refit: bool = True,
) -> SelectionResult:
    """Choose the factor count by repeated train/validate splits.

    For every candidate K and split, fit on the training part and score
    the held-out part; the chosen K maximizes the split-average score
    (ties break to the smallest K).  Failed splits are recorded and
    excluded; a K whose splits all fail is dropped.  A final fit on the
    full data at the chosen K is returned unless ``refit`` is false.
    """
    times = validate_times(times)
    y = validate_observations(obs, times)
    candidates = sorted(set(int(k) for k in candidates))
    if not candidates:
        raise ConfigError("candidate set for K must be nonempty")
    splits = plan.indices(y.shape[0])
    if bandwidth_grid is None and not homoscedastic:
        bandwidth_grid = default_bandwidth_grid(times)

    jobs = [
        delayed(_split_job)(y, times, k, s, train, val, config, family, nu,
                            bandwidth_grid, homoscedastic, refresh)
        for k in candidates for s, (train, val) in enumerate(splits)
    ]
    results = Parallel(n_jobs=n_jobs)(jobs)

    per_split: dict = {k: [None] * len(splits) for k in candidates}
    failures = []
    for k, s, score, h_used, err in results:
        if err is None:
            per_split[k][s] = score
        else:
            failures.append({"K": k, "split": s, "error": err})
    v_table = {}
    for k in candidates:
        scores = [v for v in per_split[k] if v is not None]
        if scores:
            v_table[k] = float(np.mean(scores))
    if not v_table:
        raise NumericError("every split failed for every candidate K")
    best = max(v_table.items(), key=lambda kv: (kv[1], -kv[0]))
    k_hat = int(best[0])

    result = SelectionResult(k_hat=k_hat, h_hat=None, v_table=v_table,
                             per_split=per_split, failures=failures)
    if refit:
        if homoscedastic:
            scheme = WeightScheme.single()
            if family == "student_t":
                params, _, report = fit_robust(y, times, scheme, k_hat, config, nu)
            else:
                params, report = fit(y, times, scheme, k_hat, config)
            h_hat = None
        else:
            out = fit_dynamic_bandwidth(y, times, k_hat, bandwidth_grid, config,
                                        family, nu, refresh)
            params, report, h_hat = out[0], out[1], out[2]
        result.params = params
        result.fit_report = report
        result.h_hat = h_hat
    return result
