"""Robust (Student's-t) ECM: scale summaries, downweighting, Gaussian limit."""

import numpy as np

from tvcov.basis import BasisSet
from tvcov.densities import marginal_covariance
from tvcov.em_gaussian import FitConfig, e_step, fit, m_step
from tvcov.em_robust import RobustEStepStats, e_step_robust, fit_robust, m_step_robust
from tvcov.params import FactorParams
from tvcov.weights import WeightScheme

from oracles import (
    maximize_over_spd,
    maximize_over_vector,
    q_basis_block,
    q_loading_noise,
)

from test_em_gaussian import random_instance


class TestRobustEStep:
    def test_zero_observation_scale(self):
        rng = np.random.default_rng(0)
        times, y, params = random_instance(rng, n=6, q=3)
        y = np.zeros_like(y)
        stats = e_step_robust(y, times, params, nu=5.0)
        np.testing.assert_allclose(stats.xi2, (5.0 + 3) / 5.0, rtol=1e-12)

    def test_huge_nu_gives_unit_scales(self):
        rng = np.random.default_rng(1)
        times, y, params = random_instance(rng)
        stats = e_step_robust(y, times, params, nu=1e12)
        np.testing.assert_allclose(stats.xi2, 1.0, atol=1e-6)

    def test_scalar_hand_value(self):
        # Q=1, B=0, Sigma=1, nu=6, y=2: xi^2 = (6+1)/(6+4) = 0.7
        basis = BasisSet(np.array([[[1.0]]]))
        scheme = WeightScheme(centers=[0.0], bandwidths=[1.0])
        params = FactorParams(loading=np.zeros((1, 1)), basis=basis,
                              scheme=scheme, sigma=np.ones(1))
        stats = e_step_robust(np.array([[2.0]]), np.array([0.0]), params, nu=6.0)
        np.testing.assert_allclose(stats.xi2[0], 0.7, rtol=1e-12)

    def test_quadratic_form_matches_dense(self):
        rng = np.random.default_rng(2)
        times, y, params = random_instance(rng, n=7, q=4, k=2)
        nu = 6.0
        stats = e_step_robust(y, times, params, nu)
        for n in range(len(times)):
            cov = marginal_covariance(times[n], params)
            quad = y[n] @ np.linalg.solve(cov, y[n])
            np.testing.assert_allclose(stats.xi2[n],
                                       (nu + y.shape[1]) / (nu + quad), rtol=1e-9)

    def test_xi2_monotone_in_quadratic_form(self):
        rng = np.random.default_rng(3)
        times, y, params = random_instance(rng, n=20)
        stats = e_step_robust(y, times, params, nu=4.0)
        order_quad = np.argsort(stats.quad)
        order_xi = np.argsort(stats.xi2)[::-1]
        np.testing.assert_array_equal(order_quad, order_xi)


class TestRobustMStep:
    def test_unit_scales_reduce_to_gaussian(self):
        rng = np.random.default_rng(4)
        times, y, params = random_instance(rng)
        base = e_step(y, times, params)
        forced = RobustEStepStats(eta=base.eta, psi=base.psi, quad=base.quad,
                                  logdet_cov=base.logdet_cov,
                                  weights=base.weights,
                                  sigma_used=base.sigma_used,
                                  xi2=np.ones(len(times)))
        gauss = m_step(y, times, base, params.scheme)
        robust = m_step_robust(y, times, forced, params.scheme)
        np.testing.assert_allclose(robust.basis.mats, gauss.basis.mats, atol=1e-12)
        np.testing.assert_allclose(robust.loading, gauss.loading, atol=1e-12)
        np.testing.assert_allclose(robust.sigma, gauss.sigma, atol=1e-12)

    def test_matches_numerical_maximizer(self):
        rng = np.random.default_rng(5)
        times, y, params = random_instance(rng, n=10, q=3, k=2, d=2)
        stats = e_step_robust(y, times, params, nu=5.0)
        out = m_step_robust(y, times, stats, params.scheme)
        xi2 = stats.xi2
        outer = stats.eta[:, :, None] * stats.eta[:, None, :]
        seconds = xi2[:, None, None] * outer + stats.psi
        for d in range(2):
            num = maximize_over_spd(
                lambda lam: q_basis_block(lam, stats.weights[:, d], seconds),
                out.basis.mats[d], seed=d,
            )
            np.testing.assert_allclose(out.basis.mats[d], num, rtol=2e-5, atol=1e-7)
        q_dim, k = out.loading.shape

        def q_bs(v):
            b = v[: q_dim * k].reshape(q_dim, k)
            sig = v[q_dim * k:]
            return q_loading_noise(b, sig, y, stats.eta, stats.psi, xi2=xi2)

        start = np.concatenate([out.loading.ravel(), out.sigma])
        num = maximize_over_vector(q_bs, start, seed=11)
        np.testing.assert_allclose(out.loading.ravel(), num[: q_dim * k],
                                   rtol=2e-5, atol=1e-6)
        np.testing.assert_allclose(out.sigma, num[q_dim * k:], rtol=2e-5, atol=1e-6)

    def test_vanishing_scale_removes_data_contribution(self):
        rng = np.random.default_rng(6)
        times, y, params = random_instance(rng, n=8)
        stats = e_step_robust(y, times, params, nu=5.0)
        xi2 = stats.xi2.copy()
        xi2[3] = 1e-300
        forced = RobustEStepStats(eta=stats.eta, psi=stats.psi, quad=stats.quad,
                                  logdet_cov=stats.logdet_cov,
                                  weights=stats.weights,
                                  sigma_used=stats.sigma_used, xi2=xi2)
        out = m_step_robust(y, times, forced, params.scheme)
        y_altered = y.copy()
        y_altered[3] = 1e6  # the downweighted point cannot move the loading
        out2 = m_step_robust(y_altered, times, forced, params.scheme)
        np.testing.assert_allclose(out.loading, out2.loading, rtol=1e-9)


class TestFitRobust:
    def test_gaussian_limit_matches_gaussian_fit(self):
        rng = np.random.default_rng(7)
        n, q, k = 30, 4, 2
        times = np.arange(float(n))
        b_true = rng.standard_normal((q, k))
        y = rng.standard_normal((n, k)) @ b_true.T + 0.5 * rng.standard_normal((n, q))
        scheme = WeightScheme.from_times(times, 10.0)
        config = FitConfig(max_iter=25, rel_tol=1e-15, seed=8)
        params_g, _ = fit(y, times, scheme, k, config)
        params_r, extras, _ = fit_robust(y, times, scheme, k, config, nu=1e8)
        np.testing.assert_allclose(extras.xi2, 1.0, atol=1e-6)
        np.testing.assert_allclose(params_r.loading, params_g.loading, rtol=1e-4,
                                   atol=1e-8)
        np.testing.assert_allclose(params_r.sigma, params_g.sigma, rtol=1e-4)
        np.testing.assert_allclose(params_r.basis.mats, params_g.basis.mats,
                                   rtol=1e-4, atol=1e-8)

    def test_monotone_on_heavy_tailed_data(self):
        rng = np.random.default_rng(9)
        n, q, k = 40, 5, 2
        times = np.arange(float(n))
        z = rng.standard_normal((n, k)) @ rng.standard_normal((k, q))
        w = rng.chisquare(6, size=n) / 6
        y = (z + 0.5 * rng.standard_normal((n, q))) / np.sqrt(w)[:, None]
        scheme = WeightScheme.from_times(times, 12.0)
        _, _, report = fit_robust(y, times, scheme, k,
                                  FitConfig(max_iter=60, seed=10), nu=6.0)
        trace = np.asarray(report.trace)
        assert np.all(np.diff(trace) >= -1e-8 * np.abs(trace[:-1]))

    def test_outlier_moves_robust_fit_less(self):
        rng = np.random.default_rng(10)
        n, q, k = 50, 4, 1
        times = np.arange(float(n))
        b_true = np.ones((q, k))
        y = rng.standard_normal((n, k)) @ b_true.T + 0.3 * rng.standard_normal((n, q))
        scheme = WeightScheme.from_times(times, 15.0)
        config = FitConfig(max_iter=80, seed=11)

        def frob_change(fit_fun):
            clean = fit_fun(y)
            spiked = y.copy()
            spiked[25] += 25.0
            dirty = fit_fun(spiked)
            grid = np.linspace(0, n - 1.0, 9)
            return np.linalg.norm(marginal_covariance(grid, dirty)
                                  - marginal_covariance(grid, clean))

        gauss_change = frob_change(lambda d: fit(d, times, scheme, k, config)[0])
        robust_change = frob_change(
            lambda d: fit_robust(d, times, scheme, k, config, nu=6.0)[0]
        )
        assert robust_change < gauss_change
