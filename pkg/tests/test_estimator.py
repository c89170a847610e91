import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covmatch import estimator, gen
from covmatch.errors import DataError, ParameterError


def pinv_oracle(x, y):
    return np.linalg.pinv(x.T @ x) @ x.T @ y


class TestMinNormLs:
    def test_single_equation(self):
        np.testing.assert_allclose(estimator.min_norm_ls([[1.0, 0.0]], [2.0]), [2.0, 0.0], atol=1e-15)

    def test_orthogonal_square(self, rng):
        q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        y = rng.standard_normal(6)
        np.testing.assert_allclose(estimator.min_norm_ls(q, y), q.T @ y, atol=1e-12)

    @pytest.mark.parametrize("shape", [(8, 5), (5, 8)])
    def test_matches_pseudo_inverse(self, rng, shape):
        x = rng.standard_normal(shape)
        y = x @ rng.standard_normal(shape[1]) + 0.1 * rng.standard_normal(shape[0])
        expected = pinv_oracle(x, y)
        got = estimator.min_norm_ls(x, y)
        assert np.linalg.norm(got - expected) <= 1e-8 * np.linalg.norm(expected)

    def test_rank_deficient(self, rng):
        base = rng.standard_normal((10, 3))
        x = np.hstack([base, base[:, :1]])
        y = rng.standard_normal(10)
        expected = np.linalg.pinv(x) @ y
        np.testing.assert_allclose(estimator.min_norm_ls(x, y), expected, rtol=1e-8, atol=1e-10)

    def test_non_finite(self):
        with pytest.raises(DataError):
            estimator.min_norm_ls([[np.nan, 1.0]], [1.0])
        with pytest.raises(DataError):
            estimator.min_norm_ls([[1.0, 1.0]], [np.inf])

    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            estimator.min_norm_ls(np.ones((3, 2)), np.ones(4))

    @settings(max_examples=40, deadline=None)
    @given(n=st.integers(1, 12), p=st.integers(1, 12), seed=st.integers(0, 10**6))
    def test_row_space_and_interpolation(self, n, p, seed):
        r = np.random.default_rng(seed)
        x = r.standard_normal((n, p))
        y = r.standard_normal(n)
        b = estimator.min_norm_ls(x, y)
        # b lies in the row space of X
        _, s, vt = np.linalg.svd(x)
        rank = int(np.sum(s > 1e-10 * s[0]))
        null = vt[rank:]
        assert np.linalg.norm(null @ b) <= 1e-8 * max(1.0, np.linalg.norm(b))
        if rank == n:
            np.testing.assert_allclose(x @ b, y, atol=1e-8 * max(1.0, np.linalg.norm(y)))


class TestExcessRisk:
    def test_zero_error(self):
        cov = gen.kms_matrix(4, 0.5)
        beta = np.arange(4.0)
        assert estimator.excess_risk(beta, beta, cov, np.ones(4)) == 0.0

    def test_isotropic(self, rng):
        b, bh = rng.standard_normal(5), rng.standard_normal(5)
        got = estimator.excess_risk(bh, b, gen.identity(5), np.zeros(5))
        assert got == pytest.approx(np.sum((bh - b) ** 2), rel=1e-14)

    def test_dense_oracle(self, rng):
        p = 12
        m = np.array([[0.9 ** abs(i - j) for j in range(p)] for i in range(p)])
        mu = rng.standard_normal(p)
        b, bh = rng.standard_normal(p), rng.standard_normal(p)
        d = bh - b
        full = m + np.outer(mu, mu)
        expected = sum(d[i] * full[i, j] * d[j] for i in range(p) for j in range(p))
        got = estimator.excess_risk(bh, b, gen.kms_matrix(p, 0.9), mu)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DataError):
            estimator.excess_risk(np.ones(3), np.ones(3), gen.identity(4), np.zeros(3))


class TestBiasVariance:
    def test_full_rank_has_no_bias(self, rng):
        x = rng.standard_normal((30, 10))
        beta = rng.standard_normal(10)
        bias, _ = estimator.bias_variance(x, beta, gen.kms_matrix(10, 0.6), rng.standard_normal(10), 1.0)
        assert bias <= 1e-10 * beta @ beta

    def test_noiseless_variance(self, rng):
        x = rng.standard_normal((5, 10))
        _, var = estimator.bias_variance(x, rng.standard_normal(10), gen.identity(10), np.zeros(10), 0.0)
        assert var == 0.0

    def test_matches_noise_average(self):
        r = np.random.default_rng(7)
        n, p, sigma = 20, 40, 0.7
        cov = gen.kms_matrix(p, 0.5)
        mu = 0.3 * r.standard_normal(p)
        x = r.standard_normal((n, p))
        beta = r.standard_normal(p)
        bias, var = estimator.bias_variance(x, beta, cov, mu, sigma)
        pinv = np.linalg.pinv(x)
        a = cov.matrix + np.outer(mu, mu)
        eps = sigma * r.standard_normal((10_000, n))
        diffs = (x @ beta + eps) @ pinv.T - beta
        risks = np.einsum("ij,jk,ik->i", diffs, a, diffs)
        se = risks.std(ddof=1) / np.sqrt(risks.size)
        assert abs(risks.mean() - (bias + var)) <= 5 * se

    def test_exact_decomposition_of_expectation(self):
        # closed-form oracle: E||.||_A^2 = ||(P_row - I) beta||_A^2 + sigma^2 Tr(X^+ A X^+T)
        r = np.random.default_rng(8)
        n, p, sigma = 6, 9, 1.3
        x = r.standard_normal((n, p))
        beta = r.standard_normal(p)
        a = gen.kms_matrix(p, 0.4)
        pinv = np.linalg.pinv(x)
        e = pinv @ x @ beta - beta
        expected_bias = e @ a.matrix @ e
        expected_var = sigma**2 * np.trace(pinv.T @ a.matrix @ pinv)
        bias, var = estimator.bias_variance(x, beta, a, np.zeros(p), sigma)
        assert bias == pytest.approx(expected_bias, rel=1e-10)
        assert var == pytest.approx(expected_var, rel=1e-10)


def identity_spec(p, n_t, n_s, sigma=1.0, beta=None):
    return gen.DatasetSpec(
        p, n_t, n_s, sigma, gen.identity(p), gen.identity(p), gen.zero_means(p),
        np.ones(p) / np.sqrt(p) if beta is None else beta,
    )


class TestMonteCarlo:
    def test_noiseless_interpolation(self):
        spec = identity_spec(10, 20, 20, sigma=0.0)
        est = estimator.monte_carlo_risk(spec, 10, 0)
        assert np.all(est.per_trial <= 1e-16 * spec.beta @ spec.beta)

    def test_isotropic_synthetic_only(self):
        spec = identity_spec(100, 0, 200)
        est = estimator.monte_carlo_risk(spec, 200, 0)
        assert abs(est.mean - 1.0) <= 3 * est.std_error

    def test_std_error_shrinks(self):
        spec = identity_spec(20, 30, 30)
        small = estimator.monte_carlo_risk(spec, 100, 1)
        large = estimator.monte_carlo_risk(spec, 400, 1)
        ratio = large.std_error / small.std_error
        assert 0.5 / 1.5 <= ratio <= 0.5 * 1.5

    def test_nonnegative_and_finite(self):
        est = estimator.monte_carlo_risk(identity_spec(15, 5, 5), 20, 2)
        assert est.mean >= 0 and est.std_error >= 0 and np.all(np.isfinite(est.per_trial))
        assert est.trials == 20

    def test_deterministic_across_workers(self):
        spec = identity_spec(12, 10, 10)
        serial = estimator.monte_carlo_risk(spec, 16, 5)
        again = estimator.monte_carlo_risk(spec, 16, 5)
        threaded = estimator.monte_carlo_risk(spec, 16, 5, workers=3)
        np.testing.assert_array_equal(serial.per_trial, again.per_trial)
        np.testing.assert_array_equal(serial.per_trial, threaded.per_trial)
        assert serial.mean == threaded.mean and serial.std_error == threaded.std_error

    def test_seed_matters(self):
        spec = identity_spec(12, 10, 10)
        assert estimator.monte_carlo_risk(spec, 5, 0).mean != estimator.monte_carlo_risk(spec, 5, 1).mean

    def test_resampled_beta_is_used(self):
        spec = identity_spec(12, 4, 4, sigma=0.0)
        fixed = estimator.monte_carlo_risk(spec, 8, 0)
        resampled = estimator.monte_carlo_risk(spec, 8, 0, beta_radius=3.0)
        # noiseless, so the risk is pure bias and scales with the squared radius
        assert resampled.mean > 3 * fixed.mean

    def test_rejects_single_trial(self):
        with pytest.raises(ParameterError):
            estimator.monte_carlo_risk(identity_spec(3, 5, 5), 1)

    def test_failure_names_trial(self, monkeypatch):
        def broken(x, y):
            raise DataError("singular")

        monkeypatch.setattr(estimator, "min_norm_ls", broken)
        with pytest.raises(DataError, match="trial 0"):
            estimator.monte_carlo_risk(identity_spec(3, 5, 5), 4)

    def test_trial_seed_is_pure(self):
        a = estimator.trial_seed(3, 9).generate_state(4)
        b = estimator.trial_seed(3, 9).generate_state(4)
        c = estimator.trial_seed(3, 10).generate_state(4)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)
