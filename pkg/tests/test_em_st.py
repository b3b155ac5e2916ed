"""Spatiotemporal ECM: E-step structure, conditional-maximizer oracles."""

import numpy as np

from tvcov.basis import BasisSet
from tvcov.em_gaussian import FitConfig, e_step
from tvcov.em_st import (
    e_step_st,
    ecm_step_st,
    fit_st,
    log_joint_st,
    normalize_scale,
)
from tvcov.params import FactorParams, STParams
from tvcov.weights import WeightScheme

from oracles import (
    maximize_over_spd,
    maximize_over_vector,
    q_st_factor_a,
    q_st_factor_b,
    q_st_noise,
    random_spd,
)


def random_st_instance(rng, n=8, q=3, p=2, kq=2, kp=1, variant="b"):
    times = np.sort(rng.uniform(0, 10, n)) + np.arange(n) * 1e-6
    y = rng.standard_normal((n, q, p))
    d = 2
    centers = np.linspace(times[0], times[-1], d)
    if variant == "a":
        scheme = WeightScheme(centers=centers, bandwidths=5.0)
        params = STParams(
            loading_out=rng.standard_normal((q, kq)),
            loading_space=rng.standard_normal((p, kp)),
            sigma=rng.uniform(0.5, 1.5, q), phi=rng.uniform(0.5, 1.5, p),
            variant="a",
            basis_joint=BasisSet(np.stack([random_spd(kq * kp, rng)
                                           for _ in range(d)])),
            scheme_joint=scheme,
        )
    else:
        scheme_l = WeightScheme(centers=centers, bandwidths=5.0)
        scheme_g = WeightScheme(centers=centers, bandwidths=7.0)
        params = STParams(
            loading_out=rng.standard_normal((q, kq)),
            loading_space=rng.standard_normal((p, kp)),
            sigma=rng.uniform(0.5, 1.5, q), phi=rng.uniform(0.5, 1.5, p),
            variant="b",
            basis_out=BasisSet(np.stack([random_spd(kq, rng) for _ in range(d)])),
            scheme_out=scheme_l,
            basis_space=BasisSet(np.stack([random_spd(kp, rng) for _ in range(d)])),
            scheme_space=scheme_g,
        )
    return times, y, params


class TestEStepSt:
    def test_reduces_to_gaussian_when_p_is_one(self):
        rng = np.random.default_rng(0)
        times, y, params = random_st_instance(rng, p=1, kp=1, variant="a")
        params = STParams(
            loading_out=params.loading_out, loading_space=np.ones((1, 1)),
            sigma=params.sigma, phi=np.ones(1), variant="a",
            basis_joint=params.basis_joint, scheme_joint=params.scheme_joint,
        )
        st = e_step_st(y, times, params)
        flat = FactorParams(loading=params.loading_out, basis=params.basis_joint,
                            scheme=params.scheme_joint, sigma=params.sigma)
        g = e_step(y[:, :, 0], times, flat)
        np.testing.assert_allclose(st.eta[:, :, 0], g.eta, rtol=1e-10)
        np.testing.assert_allclose(st.psi, g.psi, rtol=1e-10)
        np.testing.assert_allclose(st.quad, g.quad, rtol=1e-10)
        np.testing.assert_allclose(st.logdet_cov, g.logdet_cov, rtol=1e-10)

    def test_zero_loadings_return_prior(self):
        rng = np.random.default_rng(1)
        times, y, params = random_st_instance(rng, variant="b")
        params = STParams(
            loading_out=np.zeros_like(params.loading_out),
            loading_space=np.zeros_like(params.loading_space),
            sigma=params.sigma, phi=params.phi, variant="b",
            basis_out=params.basis_out, scheme_out=params.scheme_out,
            basis_space=params.basis_space, scheme_space=params.scheme_space,
        )
        stats = e_step_st(y, times, params)
        np.testing.assert_allclose(stats.eta, 0.0, atol=1e-14)
        np.testing.assert_allclose(stats.psi, params.factor_cov_at(times), rtol=1e-9)

    def test_scalar_case_closed_formula(self):
        rng = np.random.default_rng(2)
        times, y, params = random_st_instance(rng, q=1, p=1, kq=1, kp=1, variant="b")
        stats = e_step_st(y, times, params)
        b = params.loading_out[0, 0]
        c = params.loading_space[0, 0]
        s = params.sigma[0] * params.phi[0]
        for n in range(len(times)):
            lam = params.factor_cov_at(times[n])[0, 0]
            prec = 1.0 / lam + (b * c) ** 2 / s
            psi = 1.0 / prec
            eta = psi * (b * c) * y[n, 0, 0] / s
            np.testing.assert_allclose(stats.psi[n, 0, 0], psi, rtol=1e-10)
            np.testing.assert_allclose(stats.eta[n, 0, 0], eta, rtol=1e-10)

    def test_posterior_matches_dense_construction(self):
        rng = np.random.default_rng(3)
        times, y, params = random_st_instance(rng, n=5, q=3, p=3, kq=2, kp=2)
        stats = e_step_st(y, times, params)
        kron_load = np.kron(params.loading_space, params.loading_out)
        noise_inv = np.diag(1.0 / np.kron(params.phi, params.sigma))
        for n in range(len(times)):
            prior = params.factor_cov_at(times[n])
            prec = np.linalg.inv(prior) + kron_load.T @ noise_inv @ kron_load
            psi = np.linalg.inv(prec)
            vec_y = y[n].reshape(-1, order="F")
            eta_vec = psi @ kron_load.T @ noise_inv @ vec_y
            np.testing.assert_allclose(stats.psi[n], psi, rtol=1e-8)
            np.testing.assert_allclose(stats.eta[n].reshape(-1, order="F"),
                                       eta_vec, rtol=1e-8, atol=1e-10)

    def test_block_symmetry(self):
        rng = np.random.default_rng(4)
        times, y, params = random_st_instance(rng, n=5, q=3, p=3, kq=2, kp=2)
        stats = e_step_st(y, times, params)
        blocks = stats.psi_blocks
        for n in range(blocks.shape[0]):
            for i in range(blocks.shape[1]):
                for j in range(blocks.shape[2]):
                    np.testing.assert_allclose(blocks[n, i, j],
                                               blocks[n, j, i].T, atol=1e-12)

    def test_kron_vec_identity(self):
        rng = np.random.default_rng(5)
        b = rng.standard_normal((4, 2))
        c = rng.standard_normal((3, 2))
        eta = rng.standard_normal((6, 2, 2))
        from tvcov.em_st import _vec_columns
        lhs = _vec_columns(np.einsum("qa,nak,pk->nqp", b, eta, c))
        rhs = np.einsum("ij,nj->ni", np.kron(c, b), _vec_columns(eta))
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestEcmOracles:
    def test_variant_b_blocks_match_numerical_maximizers(self):
        rng = np.random.default_rng(6)
        times, y, params = random_st_instance(rng, n=7, q=3, p=3, kq=2, kp=2)
        stats = e_step_st(y, times, params)
        out = ecm_step_st(y, times, stats, params)
        wl = params.scheme_out.weight_matrix(times)
        wg = params.scheme_space.weight_matrix(times)
        lams_old = list(params.basis_out.mats)
        gams_new = list(out.basis_space.mats)
        lams_new = list(out.basis_out.mats)
        kq, kp = params.n_factors

        for m in range(2):
            def q_gamma(g, m=m):
                gset = list(gams_new)
                gset[m] = g
                return q_st_factor_b(lams_old, gset, wl, wg, stats.eta,
                                     stats.psi, kq, kp)
            num = maximize_over_spd(q_gamma, out.basis_space.mats[m], seed=m)
            np.testing.assert_allclose(out.basis_space.mats[m], num,
                                       rtol=3e-5, atol=1e-7)

        for m in range(2):
            def q_lambda(l, m=m):
                lset = list(lams_new)
                lset[m] = l
                return q_st_factor_b(lset, gams_new, wl, wg, stats.eta,
                                     stats.psi, kq, kp)
            num = maximize_over_spd(q_lambda, out.basis_out.mats[m], seed=m + 5)
            np.testing.assert_allclose(out.basis_out.mats[m], num,
                                       rtol=3e-5, atol=1e-7)

        b_old, c_old = params.loading_out, params.loading_space
        sig_old = params.sigma

        def q_phi(v):
            return q_st_noise(c_old, b_old, v, sig_old, y, stats.eta, stats.psi)
        num_phi = maximize_over_vector(q_phi, out.phi, lower=1e-6, seed=21)
        np.testing.assert_allclose(out.phi, num_phi, rtol=3e-5, atol=1e-7)

        def q_sigma(v):
            return q_st_noise(c_old, b_old, out.phi, v, y, stats.eta, stats.psi)
        num_sig = maximize_over_vector(q_sigma, out.sigma, lower=1e-6, seed=22)
        np.testing.assert_allclose(out.sigma, num_sig, rtol=3e-5, atol=1e-7)

        p_dim, kp_dim = c_old.shape
        def q_c(v):
            return q_st_noise(v.reshape(p_dim, kp_dim), b_old, out.phi,
                              out.sigma, y, stats.eta, stats.psi)
        num_c = maximize_over_vector(q_c, out.loading_space.ravel(), seed=23)
        np.testing.assert_allclose(out.loading_space.ravel(), num_c,
                                   rtol=3e-5, atol=1e-6)

        q_dim, kq_dim = b_old.shape
        def q_b(v):
            return q_st_noise(out.loading_space, v.reshape(q_dim, kq_dim),
                              out.phi, out.sigma, y, stats.eta, stats.psi)
        num_b = maximize_over_vector(q_b, out.loading_out.ravel(), seed=24)
        np.testing.assert_allclose(out.loading_out.ravel(), num_b,
                                   rtol=3e-5, atol=1e-6)

    def test_variant_a_joint_basis_matches_numerical_maximizer(self):
        rng = np.random.default_rng(7)
        times, y, params = random_st_instance(rng, n=6, q=3, p=2, kq=2, kp=1,
                                              variant="a")
        stats = e_step_st(y, times, params)
        out = ecm_step_st(y, times, stats, params)
        wj = params.scheme_joint.weight_matrix(times)
        lams_new = list(out.basis_joint.mats)
        for m in range(2):
            def q_lam(l, m=m):
                lset = list(lams_new)
                lset[m] = l
                return q_st_factor_a(lset, wj, stats.eta, stats.psi)
            num = maximize_over_spd(q_lam, out.basis_joint.mats[m], seed=m + 40)
            np.testing.assert_allclose(out.basis_joint.mats[m], num,
                                       rtol=3e-5, atol=1e-7)

    def test_variant_b_trivial_space_side_reduces_to_gaussian_m_step(self):
        rng = np.random.default_rng(8)
        times, y3, params = random_st_instance(rng, q=4, p=1, kq=2, kp=1)
        ones = BasisSet(np.ones((2, 1, 1)))
        params = STParams(
            loading_out=params.loading_out, loading_space=np.ones((1, 1)),
            sigma=params.sigma, phi=np.ones(1), variant="b",
            basis_out=params.basis_out, scheme_out=params.scheme_out,
            basis_space=ones, scheme_space=params.scheme_space,
        )
        stats = e_step_st(y3, times, params)
        out = ecm_step_st(y3, times, stats, params,
                          freeze=frozenset({"space_loading", "phi", "space_basis"}))
        from tvcov.em_gaussian import m_step
        flat_params = FactorParams(loading=params.loading_out,
                                   basis=params.basis_out,
                                   scheme=params.scheme_out, sigma=params.sigma)
        flat_stats = e_step(y3[:, :, 0], times, flat_params)
        flat = m_step(y3[:, :, 0], times, flat_stats, params.scheme_out)
        np.testing.assert_allclose(out.basis_out.mats, flat.basis.mats, rtol=1e-10)
        # gaussian m-step computes sigma with the new loading; the st sweep
        # conditions on the old one, so loadings agree but sigmas need not
        np.testing.assert_allclose(out.loading_out, flat.loading, rtol=1e-10)

    def test_permutation_symmetric_inputs_give_constant_phi(self):
        rng = np.random.default_rng(9)
        n, q, p = 6, 2, 3
        times = np.arange(float(n))
        base = rng.standard_normal((n, q, 1))
        y = np.repeat(base, p, axis=2)  # identical across the spatial axis
        scheme = WeightScheme(centers=[2.5], bandwidths=[1.0])
        params = STParams(
            loading_out=np.ones((q, 1)), loading_space=np.ones((p, 1)),
            sigma=np.ones(q), phi=np.ones(p), variant="b",
            basis_out=BasisSet(np.eye(1)[None]), scheme_out=scheme,
            basis_space=BasisSet(np.eye(1)[None]), scheme_space=scheme,
        )
        stats = e_step_st(y, times, params)
        out = ecm_step_st(y, times, stats, params)
        np.testing.assert_allclose(out.phi, out.phi[0], rtol=1e-10)


class TestFitSt:
    def test_monotone_traces_both_variants(self):
        rng = np.random.default_rng(10)
        for trial in range(6):
            n = int(rng.integers(10, 20))
            times = np.sort(rng.uniform(0, 10, n)) + np.arange(n) * 1e-6
            y = rng.standard_normal((n, 3, 2))
            scheme = WeightScheme.from_times(times, 6.0)
            variant = "a" if trial % 2 == 0 else "b"
            kwargs = dict(scheme_joint=scheme) if variant == "a" else dict(
                scheme_out=scheme, scheme_space=scheme)
            _, report = fit_st(y, times, (2, 1), FitConfig(max_iter=30, seed=trial),
                               variant=variant, **kwargs)
            trace = np.asarray(report.trace)
            assert np.all(np.diff(trace) >= -1e-8 * np.abs(trace[:-1]))

    def test_scale_indeterminacy_of_loadings(self):
        rng = np.random.default_rng(11)
        times, y, params = random_st_instance(rng, n=6)
        base = log_joint_st(y, times, params)
        c = 3.7
        scaled = STParams(
            loading_out=params.loading_out / c,
            loading_space=params.loading_space * c,
            sigma=params.sigma, phi=params.phi, variant="b",
            basis_out=params.basis_out, scheme_out=params.scheme_out,
            basis_space=params.basis_space, scheme_space=params.scheme_space,
        )
        np.testing.assert_allclose(log_joint_st(y, times, scaled), base, rtol=1e-8)

    def test_normalize_scale_preserves_covariance(self):
        rng = np.random.default_rng(12)
        times, y, params = random_st_instance(rng)
        normalized = normalize_scale(params)
        np.testing.assert_allclose(
            np.exp(np.mean(np.log(normalized.phi))), 1.0, rtol=1e-12
        )
        np.testing.assert_allclose(
            np.kron(normalized.phi, normalized.sigma),
            np.kron(params.phi, params.sigma), rtol=1e-12,
        )

    def test_variant_b_marginal_covariance_assembly(self):
        rng = np.random.default_rng(13)
        times, y, params = random_st_instance(rng, n=4, q=2, p=2, kq=2, kp=1)
        t = times[2]
        lam = None
        from tvcov.basis import lambda_at
        lam = lambda_at(t, params.basis_out, params.scheme_out)
        gam = lambda_at(t, params.basis_space, params.scheme_space)
        b, c = params.loading_out, params.loading_space
        expected = (np.kron(c @ gam @ c.T, b @ lam @ b.T)
                    + np.diag(np.kron(params.phi, params.sigma)))
        np.testing.assert_allclose(params.marginal_covariance(t), expected,
                                   rtol=1e-10)
