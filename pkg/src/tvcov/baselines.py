"""Comparison baselines: EWMA-on-PCA covariance, the non-factor MAP
estimator, and the exponential-kernel second-moment smoother.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSet, lambda_at
from .densities import gaussian_logpdf_lowrank
from .exceptions import ConfigError, InvalidParamsError, NumericError
from .params import validate_observations, validate_times
from .weights import WeightScheme


@dataclass(frozen=True)
class EwmaModel:
    """PCA factor scores with exponentially weighted second moments.

    ``loadings`` (Q, K) are the top right singular vectors of the data
    matrix; the factor covariance at integer position ``t`` (1-based over
    the sample) averages ``z_s z_s^T`` with weights ``alpha^|t-s|``
    (``0^0 := 1``, so ``alpha = 0`` keeps only the own term and
    ``alpha = 1`` pools every term equally).
    """

    loadings: np.ndarray  # (Q, K)
    alpha: float
    scores: np.ndarray  # (N, K)
    sigma: np.ndarray  # (Q,)

    @property
    def n_points(self) -> int:
        return self.scores.shape[0]

    def _weights_at(self, pos) -> np.ndarray:
        pos = np.atleast_1d(np.asarray(pos, dtype=float))
        s = np.arange(1, self.n_points + 1, dtype=float)
        return np.power(self.alpha, np.abs(pos[:, None] - s))

    def lambda_at_position(self, pos) -> np.ndarray:
        """Factor covariance at (possibly fractional or future) positions."""
        w = self._weights_at(pos)
        denom = w.sum(axis=1)
        if np.any(denom <= 0):
            raise NumericError("all EWMA weights vanished at a requested position")
        lam = np.einsum("ts,si,sj->tij", w, self.scores, self.scores, optimize=True)
        lam = lam / denom[:, None, None]
        return lam[0] if np.ndim(pos) == 0 else lam

    def covariance_at_position(self, pos) -> np.ndarray:
        lam = self.lambda_at_position(pos)
        w = self.loadings
        if lam.ndim == 2:
            return w @ lam @ w.T + np.diag(self.sigma)
        out = np.einsum("qi,nij,rj->nqr", w, lam, w)
        idx = np.arange(w.shape[0])
        out[:, idx, idx] += self.sigma
        return out

    def logpdf(self, y, pos) -> np.ndarray:
        lam = self.lambda_at_position(np.atleast_1d(pos))
        return gaussian_logpdf_lowrank(np.atleast_2d(y), self.loadings, lam, self.sigma)


def ewma_fit(obs: np.ndarray, times: np.ndarray, n_factors: int, alpha: float) -> EwmaModel:
    """SVD projection plus exponentially weighted factor second moments."""
    times = validate_times(times)
    y = validate_observations(obs, times)
    n, q = y.shape
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError("alpha must lie in [0, 1]")
    if n_factors > min(n, q):
        raise ConfigError("n_factors cannot exceed min(N, Q)")
    _, _, vt = np.linalg.svd(y, full_matrices=False)
    w = vt[:n_factors].T  # (Q, K)
    z = y @ w
    resid = y - z @ w.T
    sigma = np.maximum(np.mean(resid**2, axis=0), 1e-12)
    return EwmaModel(loadings=w, alpha=alpha, scores=z, sigma=sigma)


def ewma_loo_score(model: EwmaModel, obs: np.ndarray) -> float:
    """Leave-one-out predictive log-likelihood over the sample.

    Each point is scored with its own term removed from the exponentially
    weighted factor covariance (loadings and noise stay at their full-sample
    values).
    """
    y = np.asarray(obs, dtype=float)
    n = model.n_points
    pos = np.arange(1, n + 1, dtype=float)
    w = model._weights_at(pos)  # (N, N), diagonal is alpha^0 = 1
    denom = w.sum(axis=1) - 1.0
    if np.any(denom <= 0):
        return -np.inf
    z = model.scores
    lam_full = np.einsum("ts,si,sj->tij", w, z, z, optimize=True)
    lam = (lam_full - z[:, :, None] * z[:, None, :]) / denom[:, None, None]
    try:
        scores = gaussian_logpdf_lowrank(y, model.loadings, lam, model.sigma)
    except NumericError:
        return -np.inf
    return float(np.sum(scores))


def ewma_select(
    obs: np.ndarray,
    times: np.ndarray,
    k_grid,
    alphas,
) -> tuple[int, float, EwmaModel]:
    """Pick (K, alpha) by leave-one-out cross-validation over a grid."""
    best = None
    for k in sorted(set(int(k) for k in k_grid)):
        for alpha in sorted(set(float(a) for a in alphas)):
            model = ewma_fit(obs, times, k, alpha)
            score = ewma_loo_score(model, obs)
            if best is None or score > best[0]:
                best = (score, k, alpha, model)
    if best is None:
        raise ConfigError("empty EWMA selection grid")
    return best[1], best[2], best[3]


def nonfactor_map(obs: np.ndarray, times: np.ndarray, scheme: WeightScheme) -> BasisSet:
    """Direct MAP estimate of the basis covariances without any factors.

    Each basis is the weight-function average of the observation outer
    products; the covariance process is their harmonic average.  Meant for
    small Q (the estimate is a dense Q x Q per basis).
    """
    times = validate_times(times)
    y = validate_observations(obs, times)
    w = scheme.weight_matrix(times)
    totals = np.sum(w, axis=0)
    if np.any(totals <= 0):
        raise NumericError("a basis receives zero total weight")
    n, q = y.shape
    outer = y[:, :, None] * y[:, None, :]
    mats = np.tensordot(w.T, outer.reshape(n, -1), axes=1).reshape(-1, q, q)
    return BasisSet(mats / totals[:, None, None])


def nonfactor_lambda_at(t, basis: BasisSet, scheme: WeightScheme) -> np.ndarray:
    """Covariance process of the non-factor model (harmonic average)."""
    return lambda_at(t, basis, scheme)


def nadaraya_watson_cov(factors: np.ndarray, times: np.ndarray, gamma: float):
    """Exponential-kernel running second moment of observed factor values.

    Returns a callable mapping time(s) to the smoothed covariance
    ``sum_n exp(-gamma |t - t_n|) f_n f_n^T / sum_n exp(-gamma |t - t_n|)``.
    """
    times = validate_times(times)
    f = np.asarray(factors, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    if f.shape[0] != times.size:
        raise InvalidParamsError("factor rows must match the time indices")
    if gamma < 0:
        raise ConfigError("gamma must be nonnegative")

    def evaluator(t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        w = np.exp(-gamma * np.abs(t_arr[:, None] - times))
        lam = np.einsum("ts,si,sj->tij", w, f, f, optimize=True)
        lam = lam / w.sum(axis=1)[:, None, None]
        return lam[0] if np.ndim(t) == 0 else lam

    return evaluator
