"""One-step-forward prediction with a rolling basis window.

At each step the next covariance is read off the weight-function
extrapolation, the realized observation is scored under the predictive
density, and the basis window rolls: a freshly initialized basis enters at
the new date, the oldest leaves, and a short EM run re-estimates the basis
set only (loading, noise, factor count and bandwidth stay frozen).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSet, log_prior_basis
from .densities import log_density
from .exceptions import ConfigError
from .params import FactorParams
from .em_gaussian import FitConfig, _update_basis, e_step
from .em_robust import e_step_robust
from .rng import rng_for
from .weights import WeightScheme


@dataclass
class ForecastResult:
    test_times: np.ndarray
    step_scores: np.ndarray

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.step_scores)

    @property
    def total(self) -> float:
        return float(np.sum(self.step_scores))


def _refit_basis_only(obs, times, params, family, nu, config):
    """EM updating the basis set alone; everything else stays frozen."""
    prev = -np.inf
    for _ in range(config.max_iter):
        if family == "student_t":
            stats = e_step_robust(obs, times, params, nu)
            outer = stats.eta[:, :, None] * stats.eta[:, None, :]
            second = stats.xi2[:, None, None] * outer + stats.psi
        else:
            stats = e_step(obs, times, params)
            second = stats.second_moment
        current = float(np.sum(-0.5 * (stats.logdet_cov + stats.quad)))
        current += log_prior_basis(params.basis, params.scheme, times)
        if np.isfinite(prev) and abs(current - prev) <= config.rel_tol * abs(prev):
            break
        prev = current
        basis = _update_basis(second, stats.weights, config.regularization)
        params = FactorParams(loading=params.loading, basis=basis,
                              scheme=params.scheme, sigma=params.sigma)
    return params


def forecast_roll(
    obs: np.ndarray,
    times: np.ndarray,
    train_count: int,
    params: FactorParams,
    family: str = "gaussian",
    nu: float | None = None,
    config: FitConfig = FitConfig(max_iter=50),
    seed: int = 0,
) -> ForecastResult:
    """Run the predict / score / roll loop over ``times[train_count:]``.

    ``params`` is the model fitted on the training window; its weight
    scheme must have one center per training time (the rolling update
    drops the oldest center and appends the new date).  The new basis is
    initialized at the smoothed covariance of the last window time with
    one percent multiplicative noise.
    """
    times = np.asarray(times, dtype=float)
    y = np.asarray(obs, dtype=float)
    if train_count < 2 or train_count > len(times):
        raise ConfigError("train_count must cover at least two observations")
    if family == "student_t" and nu is None:
        raise ConfigError("student_t forecasting requires nu")
    test_idx = range(train_count, len(times))
    if params.scheme.n_bases != train_count:
        raise ConfigError(
            "forecasting expects one basis center per training time"
        )
    if params.time_varying_sigma:
        raise ConfigError("rolling forecast supports constant sigma only")

    window_t = times[:train_count].copy()
    window_y = y[:train_count].copy()
    current = params
    h0 = float(params.scheme.bandwidths[0])
    scores = []
    rng = rng_for(seed, "forecast-basis-init")
    for step, idx in enumerate(test_idx):
        t_next = times[idx]
        scores.append(log_density(y[idx], t_next, current, family, nu))
        # roll the window: new date in, oldest out
        lam_last = current.lambda_at(window_t[-1])
        fresh = lam_last * float(np.exp(0.01 * rng.standard_normal()))
        mats = np.concatenate([current.basis.mats[1:], fresh[None]], axis=0)
        window_t = np.append(window_t[1:], t_next)
        window_y = np.vstack([window_y[1:], y[idx]])
        scheme = WeightScheme.from_times(window_t, h0)
        current = FactorParams(loading=current.loading, basis=BasisSet(mats),
                               scheme=scheme, sigma=current.sigma)
        current = _refit_basis_only(window_y, window_t, current, family, nu,
                                    config)
    return ForecastResult(test_times=times[train_count:],
                          step_scores=np.array(scores))
