"""Marginal covariance assembly and log-density evaluation."""

import numpy as np
import pytest

from tvcov.basis import BasisSet
from tvcov.densities import log_density, marginal_covariance
from tvcov.exceptions import InvalidParamsError
from tvcov.params import FactorParams
from tvcov.weights import WeightScheme

from oracles import dense_gaussian_logpdf, dense_student_logpdf, random_spd


def make_params(rng, q=4, k=2, d=3, tv_sigma=False):
    centers = np.linspace(0, 10, d)
    scheme = WeightScheme(centers=centers, bandwidths=4.0)
    basis = BasisSet(np.stack([random_spd(k, rng) for _ in range(d)]))
    loading = rng.standard_normal((q, k))
    if tv_sigma:
        tv_scheme = WeightScheme(centers=centers, bandwidths=6.0)
        nu = rng.uniform(0.5, 2.0, size=(q, d))
        return FactorParams(loading=loading, basis=basis, scheme=scheme,
                            sigma_basis=nu, sigma_scheme=tv_scheme)
    return FactorParams(loading=loading, basis=basis, scheme=scheme,
                        sigma=rng.uniform(0.5, 2.0, size=q))


class TestMarginalCovariance:
    def test_zero_loading_gives_noise_only(self):
        rng = np.random.default_rng(0)
        params = make_params(rng)
        params = FactorParams(loading=np.zeros_like(params.loading),
                              basis=params.basis, scheme=params.scheme,
                              sigma=params.sigma)
        np.testing.assert_allclose(marginal_covariance(2.0, params),
                                   np.diag(params.sigma), atol=1e-12)

    def test_identity_loading_near_zero_noise(self):
        rng = np.random.default_rng(1)
        k = 3
        basis = BasisSet(np.stack([random_spd(k, rng) for _ in range(2)]))
        scheme = WeightScheme(centers=[0.0, 5.0], bandwidths=4.0)
        eps = 1e-8
        params = FactorParams(loading=np.eye(k), basis=basis, scheme=scheme,
                              sigma=np.full(k, eps))
        lam = params.lambda_at(2.0)
        np.testing.assert_allclose(marginal_covariance(2.0, params),
                                   lam + eps * np.eye(k), rtol=1e-10)

    def test_hand_rank_one(self):
        # Q=2, K=1, B=(1,1)^T, Lambda=2, Sigma=I -> [[3,2],[2,3]]
        basis = BasisSet(np.array([[[2.0]]]))
        scheme = WeightScheme(centers=[0.0], bandwidths=[1.0])
        params = FactorParams(loading=np.ones((2, 1)), basis=basis,
                              scheme=scheme, sigma=np.ones(2))
        np.testing.assert_allclose(marginal_covariance(0.0, params),
                                   [[3.0, 2.0], [2.0, 3.0]], rtol=1e-14)

    def test_symmetric_positive_definite(self):
        rng = np.random.default_rng(2)
        params = make_params(rng, q=6, k=3)
        for t in (-1.0, 2.5, 11.0):
            cov = marginal_covariance(t, params)
            np.testing.assert_allclose(cov, cov.T, atol=1e-12)
            assert np.linalg.eigvalsh(cov)[0] > 0


class TestLogDensity:
    def test_univariate_standard_normal(self):
        basis = BasisSet(np.array([[[1.0]]]))
        scheme = WeightScheme(centers=[0.0], bandwidths=[1.0])
        params = FactorParams(loading=np.zeros((1, 1)), basis=basis,
                              scheme=scheme, sigma=np.ones(1))
        val = log_density(np.zeros(1), 0.0, params, "gaussian")
        np.testing.assert_allclose(val, -0.5 * np.log(2 * np.pi), rtol=1e-12)

    def test_matches_dense_gaussian(self):
        rng = np.random.default_rng(3)
        params = make_params(rng, q=5, k=2)
        y = rng.standard_normal(5)
        for t in (0.5, 4.0, 9.5):
            cov = marginal_covariance(t, params)
            np.testing.assert_allclose(
                log_density(y, t, params, "gaussian"),
                dense_gaussian_logpdf(y, cov), rtol=1e-10,
            )

    def test_matches_dense_student_t(self):
        rng = np.random.default_rng(4)
        params = make_params(rng, q=4, k=2)
        y = rng.standard_normal(4)
        for nu in (3.0, 6.0, 25.0):
            cov = marginal_covariance(3.0, params)
            np.testing.assert_allclose(
                log_density(y, 3.0, params, "student_t", nu=nu),
                dense_student_logpdf(y, cov, nu), rtol=1e-10,
            )

    def test_large_nu_approaches_gaussian(self):
        rng = np.random.default_rng(5)
        params = make_params(rng, q=4, k=2)
        y = rng.standard_normal(4)
        g = log_density(y, 2.0, params, "gaussian")
        t = log_density(y, 2.0, params, "student_t", nu=1e8)
        assert abs(g - t) < 1e-4

    def test_tv_sigma_density(self):
        rng = np.random.default_rng(6)
        params = make_params(rng, q=4, k=2, tv_sigma=True)
        y = rng.standard_normal(4)
        t = 3.7
        cov = params.loading @ params.lambda_at(t) @ params.loading.T
        cov = cov + np.diag(params.sigma_at(t))
        np.testing.assert_allclose(
            log_density(y, t, params, "gaussian"),
            dense_gaussian_logpdf(y, cov), rtol=1e-10,
        )

    def test_unknown_family_raises(self):
        rng = np.random.default_rng(7)
        params = make_params(rng)
        with pytest.raises(InvalidParamsError):
            log_density(np.zeros(4), 0.0, params, "laplace")


class TestSigmaAt:
    def test_constant_sigma_broadcast(self):
        rng = np.random.default_rng(8)
        params = make_params(rng)
        np.testing.assert_array_equal(params.sigma_at(1.0), params.sigma)

    def test_single_basis_tv_sigma_constant(self):
        basis = BasisSet(np.array([[[1.0]]]))
        scheme = WeightScheme(centers=[0.0], bandwidths=[1.0])
        nu = np.array([[2.5]])
        params = FactorParams(loading=np.zeros((1, 1)), basis=basis,
                              scheme=scheme, sigma_basis=nu,
                              sigma_scheme=scheme)
        for t in (0.0, 3.0, -2.0):
            np.testing.assert_allclose(params.sigma_at(t, q=0), 2.5)

    def test_equal_weight_harmonic_mean(self):
        scheme = WeightScheme(centers=[0.0, 10.0], bandwidths=5.0)
        basis = BasisSet(np.array([[[1.0]]]))
        single = WeightScheme(centers=[0.0], bandwidths=[1.0])
        nu = np.array([[1.0, 3.0]])
        params = FactorParams(loading=np.zeros((1, 1)), basis=basis,
                              scheme=single, sigma_basis=nu, sigma_scheme=scheme)
        np.testing.assert_allclose(params.sigma_at(5.0, q=0), 1.5, rtol=1e-12)

    def test_constant_values_any_weights(self):
        scheme = WeightScheme(centers=[0.0, 3.0, 9.0], bandwidths=2.0)
        basis = BasisSet(np.array([[[1.0]]]))
        single = WeightScheme(centers=[0.0], bandwidths=[1.0])
        nu = np.full((1, 3), 0.7)
        params = FactorParams(loading=np.zeros((1, 1)), basis=basis,
                              scheme=single, sigma_basis=nu, sigma_scheme=scheme)
        for t in (0.0, 2.4, 8.8):
            np.testing.assert_allclose(params.sigma_at(t, q=0), 0.7, rtol=1e-12)
