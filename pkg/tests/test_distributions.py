import numpy as np
import pytest

from plgibbs.distributions import (
    RngStream,
    sample_gaussian_regression_conditional,
    sample_inverse_gamma,
    sample_inverse_gaussian,
)
from plgibbs.errors import DecompositionError, InvalidParameterError
from plgibbs.model_core import build_fused_precision

from conftest import mcse_of
from reference_kernels import rejection_inverse_gaussian


class TestRngStream:
    def test_same_key_replays_bit_identical(self):
        a = RngStream(42, 7).gen.standard_normal(64)
        b = RngStream(42, 7).gen.standard_normal(64)
        assert np.array_equal(a, b)

    def test_distinct_streams_differ_and_decorrelate(self):
        a = RngStream(42, 0).gen.standard_normal(200_000)
        b = RngStream(42, 1).gen.standard_normal(200_000)
        assert not np.array_equal(a[:64], b[:64])
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.01

    def test_substreams_are_deterministic(self):
        s1 = RngStream(3, 5).substream(9)
        s2 = RngStream(3, 5).substream(9)
        assert s1.stream_id == s2.stream_id
        assert np.array_equal(s1.gen.standard_normal(8), s2.gen.standard_normal(8))

    def test_rejects_out_of_range_ids(self):
        with pytest.raises(InvalidParameterError):
            RngStream(-1, 0)
        with pytest.raises(InvalidParameterError):
            RngStream(0, 2**64)


class TestInverseGaussian:
    def test_reciprocal_mean_identity(self):
        # 1/Y ~ IG(a, b)  =>  E[Y] = 1/a + 1/b
        rng = RngStream(11, 0)
        draws = sample_inverse_gaussian(2.0, 4.0, rng, size=1_000_000)
        recip = 1.0 / draws
        assert abs(recip.mean() - 0.75) < 3 * mcse_of(recip)

    def test_concentration_at_mean_for_large_shape(self):
        rng = RngStream(12, 0)
        draws = sample_inverse_gaussian(1.0, 1e8, rng, size=1_000_000)
        assert abs(draws.mean() - 1.0) < 1e-3

    def test_mean_and_variance_against_rejection_sampler(self):
        a, b = 0.5, 2.0
        rng = RngStream(13, 0)
        draws = sample_inverse_gaussian(a, b, rng, size=1_000_000)
        oracle = rejection_inverse_gaussian(a, b, 300_000, seed=5)
        assert abs(draws.mean() - a) < 3 * mcse_of(draws)
        assert abs(oracle.mean() - a) < 4 * mcse_of(oracle)
        # var = a^3 / b, checked on both routes
        target_var = a**3 / b
        var_draws = (draws - a) ** 2
        var_oracle = (oracle - a) ** 2
        assert abs(var_draws.mean() - target_var) < 3 * mcse_of(var_draws)
        assert abs(var_oracle.mean() - target_var) < 4 * mcse_of(var_oracle)
        assert abs(var_draws.mean() - var_oracle.mean()) < 3 * np.hypot(
            mcse_of(var_draws), mcse_of(var_oracle)
        )

    def test_reciprocal_mean_identity_over_random_parameters(self):
        rng = RngStream(14, 0)
        param_gen = np.random.default_rng(99)
        for _ in range(20):
            a = param_gen.uniform(0.01, 100.0)
            b = param_gen.uniform(0.01, 100.0)
            draws = 1.0 / sample_inverse_gaussian(a, b, rng, size=1_000_000)
            assert abs(draws.mean() - (1 / a + 1 / b)) < 3 * mcse_of(draws)

    def test_strictly_positive_at_extreme_mean(self):
        rng = RngStream(15, 0)
        for a in (1e-6, 1.0, 1e9, 1e15):
            draws = sample_inverse_gaussian(a, 0.5, rng, size=50_000)
            assert np.all(draws > 0) and np.all(np.isfinite(draws))

    def test_rejects_bad_parameters(self):
        rng = RngStream(16, 0)
        for a, b in ((0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (np.inf, 1.0), (np.nan, 1.0)):
            with pytest.raises(InvalidParameterError):
                sample_inverse_gaussian(a, b, rng)


class TestInverseGamma:
    def test_mean(self):
        draws = sample_inverse_gamma(3.0, 4.0, RngStream(21, 0), size=1_000_000)
        assert abs(draws.mean() - 2.0) < 3 * mcse_of(draws)

    def test_reciprocal_mean(self):
        draws = 1.0 / sample_inverse_gamma(2.0, 2.0, RngStream(22, 0), size=1_000_000)
        assert abs(draws.mean() - 1.0) < 3 * mcse_of(draws)

    def test_support(self):
        draws = sample_inverse_gamma(0.5, 0.5, RngStream(23, 0), size=100_000)
        assert np.all(draws > 0) and np.all(np.isfinite(draws))

    def test_rejects_bad_parameters(self):
        with pytest.raises(InvalidParameterError):
            sample_inverse_gamma(0.0, 1.0, RngStream(24, 0))
        with pytest.raises(InvalidParameterError):
            sample_inverse_gamma(1.0, -2.0, RngStream(24, 0))


class TestGaussianRegressionConditional:
    def test_prior_only_scalar_case(self):
        # X'X = 0, X'y = 0, unit precision and variance: a standard normal
        draws = sample_gaussian_regression_conditional(
            np.zeros((1, 1)), np.zeros(1), np.eye(1), 1.0, RngStream(31, 0), size=1_000_000
        )[:, 0]
        assert abs(draws.mean()) < 3 * mcse_of(draws)
        assert abs(draws.var() - 1.0) < 0.01

    def test_closed_form_two_dim(self):
        draws = sample_gaussian_regression_conditional(
            np.eye(2), np.array([1.0, 1.0]), np.eye(2), 2.0, RngStream(32, 0), size=400_000
        )
        assert np.allclose(draws.mean(axis=0), [0.5, 0.5], atol=0.01)
        cov = np.cov(draws.T)
        assert np.allclose(cov, np.eye(2), atol=0.02)

    def test_cholesky_and_fast_np_agree(self):
        rng = RngStream(33, 0)
        n, p = 5, 8
        x_mat = rng.gen.standard_normal((n, p))
        y = rng.gen.standard_normal(n)
        prec = build_fused_precision(rng.gen.gamma(2.0, 1.0, p), rng.gen.gamma(2.0, 1.0, p - 1))
        d1 = sample_gaussian_regression_conditional(
            x_mat.T @ x_mat, x_mat.T @ y, prec, 1.3, RngStream(34, 0), size=100_000
        )
        d2 = sample_gaussian_regression_conditional(
            x_mat.T @ x_mat, x_mat.T @ y, prec, 1.3, RngStream(34, 1),
            method="fast_np", X=x_mat, y=y, size=100_000,
        )
        for j in range(p):
            se = np.hypot(mcse_of(d1[:, j]), mcse_of(d2[:, j]))
            assert abs(d1[:, j].mean() - d2[:, j].mean()) < 4 * se
            sq1, sq2 = d1[:, j] ** 2, d2[:, j] ** 2
            se2 = np.hypot(mcse_of(sq1), mcse_of(sq2))
            assert abs(sq1.mean() - sq2.mean()) < 4 * se2

    def test_both_methods_match_exact_moments(self):
        rng = RngStream(35, 0)
        n, p = 5, 8
        x_mat = rng.gen.standard_normal((n, p))
        y = rng.gen.standard_normal(n)
        prec = build_fused_precision(rng.gen.gamma(2.0, 1.0, p), rng.gen.gamma(2.0, 1.0, p - 1))
        a = x_mat.T @ x_mat + prec.to_dense()
        mean = np.linalg.solve(a, x_mat.T @ y)
        for method, kwargs in (("cholesky", {}), ("fast_np", {"X": x_mat, "y": y})):
            d = sample_gaussian_regression_conditional(
                x_mat.T @ x_mat, x_mat.T @ y, prec, 0.9, RngStream(36, 2), size=100_000,
                method=method, **kwargs,
            )
            assert np.max(np.abs(d.mean(axis=0) - mean)) < 0.03
            assert np.max(np.abs(np.cov(d.T) - 0.9 * np.linalg.inv(a))) < 0.03

    def test_decomposition_failure_raises(self):
        with pytest.raises(DecompositionError):
            sample_gaussian_regression_conditional(
                np.zeros((2, 2)), np.zeros(2), -np.eye(2), 1.0, RngStream(37, 0)
            )

    def test_jitter_retry_recovers_borderline_spd(self):
        # singular posterior precision: plain factorization fails, the single
        # trace-scaled jitter retry succeeds
        prec = np.diag([1.0, 0.0])
        draw = sample_gaussian_regression_conditional(
            np.zeros((2, 2)), np.zeros(2), prec, 1.0, RngStream(39, 0)
        )
        assert np.all(np.isfinite(draw))

    def test_fast_np_requires_data(self):
        with pytest.raises(InvalidParameterError):
            sample_gaussian_regression_conditional(
                np.eye(2), np.zeros(2), np.eye(2), 1.0, RngStream(38, 0), method="fast_np"
            )
