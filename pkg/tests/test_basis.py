"""Harmonic-average covariance construction and the basis log-prior."""

import numpy as np
import pytest

from tvcov.basis import (
    BasisSet,
    lambda_at,
    log_prior_basis,
    log_prior_scalar,
    scalar_harmonic_at,
)
from tvcov.exceptions import InvalidParamsError
from tvcov.weights import WeightScheme

from oracles import dense_lambda, random_spd


class TestLambdaAt:
    def test_single_basis_is_constant(self):
        rng = np.random.default_rng(0)
        lam = random_spd(3, rng)
        basis = BasisSet(lam[None])
        scheme = WeightScheme(centers=[0.0], bandwidths=[1.0])
        for t in (-3.0, 0.0, 7.5):
            np.testing.assert_allclose(lambda_at(t, basis, scheme), lam, rtol=1e-12)

    def test_identical_bases_reproduce_themselves(self):
        rng = np.random.default_rng(1)
        lam = random_spd(2, rng)
        basis = BasisSet(np.stack([lam, lam, lam]))
        scheme = WeightScheme(centers=[0.0, 5.0, 10.0], bandwidths=4.0)
        np.testing.assert_allclose(lambda_at(3.3, basis, scheme), lam, rtol=1e-10)

    def test_hand_harmonic_mean(self):
        # equal weights, diag(1,2) and diag(3,6) -> diag(1.5, 3.0) per entry
        basis = BasisSet(np.stack([np.diag([1.0, 2.0]), np.diag([3.0, 6.0])]))
        scheme = WeightScheme(centers=[0.0, 10.0], bandwidths=10.0)
        np.testing.assert_allclose(lambda_at(5.0, basis, scheme),
                                   np.diag([1.5, 3.0]), rtol=1e-12)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(2)
        centers = np.array([0.0, 2.0, 7.0, 9.0])
        mats = np.stack([random_spd(3, rng) for _ in range(4)])
        basis = BasisSet(mats)
        scheme = WeightScheme(centers=centers, bandwidths=3.0)
        for t in (-1.0, 1.2, 4.4, 8.0, 12.0):
            expected = dense_lambda(t, centers, 3.0, mats)
            np.testing.assert_allclose(lambda_at(t, basis, scheme), expected,
                                       rtol=1e-10)

    def test_eigenvalue_interpolation_bounds(self):
        rng = np.random.default_rng(3)
        for trial in range(20):
            mats = np.stack([random_spd(3, rng) for _ in range(3)])
            basis = BasisSet(mats)
            scheme = WeightScheme(centers=[0.0, 5.0, 10.0],
                                  bandwidths=rng.uniform(1.0, 10.0))
            lo = min(np.linalg.eigvalsh(m)[0] for m in mats)
            hi = max(np.linalg.eigvalsh(m)[-1] for m in mats)
            for t in rng.uniform(-2, 12, 5):
                ev = np.linalg.eigvalsh(lambda_at(t, basis, scheme))
                assert ev[0] >= lo * (1 - 1e-9)
                assert ev[-1] <= hi * (1 + 1e-9)

    def test_batched_evaluation_matches_scalar(self):
        rng = np.random.default_rng(4)
        mats = np.stack([random_spd(2, rng) for _ in range(3)])
        basis = BasisSet(mats)
        scheme = WeightScheme(centers=[0.0, 1.0, 2.0], bandwidths=1.5)
        ts = np.array([0.3, 1.1, 1.9])
        batch = lambda_at(ts, basis, scheme)
        for i, t in enumerate(ts):
            np.testing.assert_allclose(batch[i], lambda_at(t, basis, scheme))


class TestLogPriorBasis:
    def test_single_basis_prior_is_zero(self):
        rng = np.random.default_rng(5)
        basis = BasisSet(random_spd(3, rng)[None])
        scheme = WeightScheme(centers=[0.0], bandwidths=[1.0])
        val = log_prior_basis(basis, scheme, np.arange(5.0))
        assert abs(val) <= 1e-10

    def test_identical_bases_prior_is_zero(self):
        rng = np.random.default_rng(6)
        lam = random_spd(2, rng)
        basis = BasisSet(np.stack([lam] * 4))
        scheme = WeightScheme(centers=[0.0, 1.0, 2.0, 3.0], bandwidths=2.0)
        val = log_prior_basis(basis, scheme, np.linspace(0, 3, 7))
        assert abs(val) <= 1e-10

    def test_distinct_bases_prior_strictly_negative(self):
        rng = np.random.default_rng(7)
        for trial in range(10):
            mats = np.stack([random_spd(2, rng) for _ in range(3)])
            basis = BasisSet(mats)
            scheme = WeightScheme(centers=[0.0, 5.0, 10.0], bandwidths=6.0)
            val = log_prior_basis(basis, scheme, np.linspace(0, 10, 9))
            assert val < -1e-6

    def test_nonpositive_on_random_instances(self):
        rng = np.random.default_rng(8)
        for trial in range(30):
            d = rng.integers(1, 5)
            mats = np.stack([random_spd(2, rng) for _ in range(d)])
            scheme = WeightScheme(centers=np.sort(rng.uniform(0, 10, d)),
                                  bandwidths=rng.uniform(0.5, 8.0))
            val = log_prior_basis(BasisSet(mats), scheme, np.linspace(0, 10, 6))
            assert val <= 1e-10

    def test_transform_invariance(self):
        # the prior value is unchanged by lam_d -> C lam_d C^T
        rng = np.random.default_rng(9)
        mats = np.stack([random_spd(3, rng) for _ in range(3)])
        scheme = WeightScheme(centers=[0.0, 4.0, 8.0], bandwidths=5.0)
        times = np.linspace(0, 8, 8)
        base = log_prior_basis(BasisSet(mats), scheme, times)
        for trial in range(20):
            c = rng.standard_normal((3, 3)) + 0.5 * np.eye(3)
            transformed = np.stack([c @ m @ c.T for m in mats])
            val = log_prior_basis(BasisSet(transformed), scheme, times)
            np.testing.assert_allclose(val, base, atol=1e-8)

    def test_scale_multiplies_value(self):
        rng = np.random.default_rng(10)
        mats = np.stack([random_spd(2, rng) for _ in range(2)])
        scheme = WeightScheme(centers=[0.0, 5.0], bandwidths=4.0)
        times = np.linspace(0, 5, 5)
        v1 = log_prior_basis(BasisSet(mats), scheme, times, scale=1.0)
        v3 = log_prior_basis(BasisSet(mats), scheme, times, scale=3.0)
        np.testing.assert_allclose(v3, 3.0 * v1, rtol=1e-12)


class TestScalarHarmonic:
    def test_equal_weights_hand_value(self):
        np.testing.assert_allclose(
            scalar_harmonic_at(np.array([0.5, 0.5]), np.array([1.0, 3.0])), 1.5
        )

    def test_constant_values(self):
        w = np.array([0.2, 0.3, 0.5])
        np.testing.assert_allclose(scalar_harmonic_at(w, np.array([2.0] * 3)), 2.0)

    def test_rejects_nonpositive(self):
        with pytest.raises(InvalidParamsError):
            scalar_harmonic_at(np.array([1.0]), np.array([0.0]))

    def test_scalar_prior_matches_matrix_prior(self):
        rng = np.random.default_rng(11)
        vals = rng.uniform(0.5, 3.0, size=3)
        scheme = WeightScheme(centers=[0.0, 1.0, 2.0], bandwidths=1.0)
        times = np.linspace(0, 2, 5)
        w = scheme.weight_matrix(times)
        scalar = log_prior_scalar(vals, w)
        mats = BasisSet(vals[:, None, None])
        matrix = log_prior_basis(mats, scheme, times)
        np.testing.assert_allclose(scalar, matrix, rtol=1e-12)
