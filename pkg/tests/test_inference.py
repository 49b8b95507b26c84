"""P-value construction, Monte-Carlo null calibration, and the pointwise
pipeline.  Distribution oracles: at p=1 the minimum p-value is exactly
U(0,1); with diagonal covariance at p=10 its CDF is 1 - (1-z)^10."""

import warnings

import numpy as np
import pytest
from scipy import stats

from tvinfer import (
    ConfigError,
    Dataset,
    DegenerateVarianceError,
    ErrorCovModel,
    InferenceConfig,
    KernelSpec,
    LassoConfig,
    NullDistribution,
    adjust_pvalues,
    build_local_design,
    estimate_null_distribution,
    infer_path,
    kernel_weights,
    pooled_residuals,
    raw_pvalues,
    ridge_covariance,
    svd_projection,
    test_pointwise as pointwise_fit,
)
from tvinfer.errors import BoundaryError
from tvinfer.estimator import PointEstimate
from tvinfer.inference import rng_stream


def _quiet_cfg(**kw):
    """Small Monte-Carlo budget for speed; the coarse-tail warning that
    fires at construction is expected here, not under test."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return InferenceConfig(**kw)


def _toy_data(rng, n=80, p=6, signal=1.5, noise=0.4):
    X = rng.standard_normal((n, p))
    y = signal * X[:, 0] + noise * rng.standard_normal(n)
    return Dataset(X=X, y=y)


def _orthonormal_design(p, m_scale=1):
    """Neighborhood whose weighted design has exactly orthonormal columns."""
    m = p * m_scale
    n = 4 * m  # interior wide enough for t = 0.5
    X = np.zeros((n, p))
    start = n // 2 - m // 2
    block = np.tile(np.eye(p), (m_scale, 1))
    X[start : start + m] = block * np.sqrt(m)
    y = np.zeros(n)
    y[start : start + m] = 1.0
    data = Dataset(X=X, y=y)
    bandwidth = (m - 1) / (2 * n) + 1e-9
    idx = np.arange(start, start + m)
    w = np.full(m, 1.0 / m)
    t = (idx.mean() + 1.0) / n
    design = build_local_design(data, idx, w, t=t)
    return svd_projection(design)


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [
            {"alpha": 0.0},
            {"alpha": 1.0},
            {"xi": -0.1},
            {"xi": 1.5},
            {"zeta": -0.01},
            {"n_mc": 500},
        ],
    )
    def test_validation(self, kw):
        with pytest.raises(ConfigError):
            InferenceConfig(**kw)

    def test_small_n_mc_warns(self):
        with pytest.warns(UserWarning, match="n_mc"):
            InferenceConfig(n_mc=2000)

    def test_rng_stream_deterministic(self):
        a = rng_stream(7, 1, 2).standard_normal(5)
        b = rng_stream(7, 1, 2).standard_normal(5)
        c = rng_stream(7, 1, 3).standard_normal(5)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)


class TestNullDistribution:
    def test_cdf_right_continuous(self):
        null = NullDistribution(samples=np.array([0.1, 0.2, 0.2, 0.4]))
        assert null.cdf(0.2) == 0.75
        assert null.cdf(0.2 - 1e-12) == 0.25
        assert null.cdf(0.05) == 0.0
        assert null.cdf(1.0) == 1.0

    def test_adjust_applies_offset_and_clip(self):
        null = NullDistribution(samples=np.linspace(0.001, 1.0, 1000))
        raw = np.array([0.05, 0.95])
        adj = adjust_pvalues(raw, null, zeta=0.1)
        np.testing.assert_allclose(
            adj, null.cdf(np.array([0.15, 1.0])), atol=1e-12
        )
        with pytest.raises(ConfigError):
            adjust_pvalues(raw, null, zeta=-0.1)


class TestRawPvalues:
    def test_known_statistic_1p96(self):
        # stat (|beta_hat| - correction)/sqrt(omega) == 1.96 -> p = 0.0500
        design = _orthonormal_design(4)
        est = PointEstimate(
            t=0.5,
            beta_tilde=np.zeros(4),
            theta_tilde=np.zeros(4),
            bias=np.zeros(4),
            beta_hat=np.array([1.96, 0.0, 0.0, 0.0]),
        )
        raw, corr = raw_pvalues(est, design, np.ones(4), 1e-300, 0.05)
        np.testing.assert_array_equal(corr, np.zeros(4))
        assert abs(raw[0] - 0.04999579029644087) < 1e-12
        np.testing.assert_array_equal(raw[1:], np.ones(3))

    def test_correction_formula(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((12, 20))
        data = Dataset(X=X, y=rng.standard_normal(12))
        idx = np.arange(12)
        design = svd_projection(
            build_local_design(data, idx, np.full(12, 1 / 12), t=0.5)
        )
        est = PointEstimate(
            t=0.5,
            beta_tilde=np.zeros(20),
            theta_tilde=np.zeros(20),
            bias=np.zeros(20),
            beta_hat=rng.standard_normal(20),
        )
        lam1, xi = 0.3, 0.05
        raw, corr = raw_pvalues(est, design, np.ones(20), lam1, xi)
        expect = lam1 ** (1 - xi) * design.projection_offdiag_max()
        np.testing.assert_allclose(corr, expect, atol=1e-14)
        stat = np.maximum(np.abs(est.beta_hat) - expect, 0.0)
        from scipy.special import erfc

        np.testing.assert_allclose(
            raw, erfc(stat / np.sqrt(2.0)), atol=1e-14
        )

    def test_degenerate_variance_error(self):
        design = _orthonormal_design(3)
        est = PointEstimate(
            t=0.5,
            beta_tilde=np.zeros(3),
            theta_tilde=np.zeros(3),
            bias=np.zeros(3),
            beta_hat=np.array([1.0, 0.0, 0.0]),
        )
        with pytest.raises(DegenerateVarianceError):
            raw_pvalues(est, design, np.zeros(3), 1e-300, 0.05)

    def test_zero_stat_zero_variance_is_fine(self):
        design = _orthonormal_design(3)
        est = PointEstimate(
            t=0.5,
            beta_tilde=np.zeros(3),
            theta_tilde=np.zeros(3),
            bias=np.zeros(3),
            beta_hat=np.zeros(3),
        )
        raw, _ = raw_pvalues(est, design, np.zeros(3), 1e-300, 0.05)
        np.testing.assert_array_equal(raw, np.ones(3))


class TestNullOracles:
    def test_p1_uniform(self):
        design = _orthonormal_design(1)
        cfg = InferenceConfig(n_mc=20_000, seed=11)
        null = estimate_null_distribution(
            design, np.eye(design.size), 1e-3, cfg
        )
        ks = stats.kstest(null.samples, "uniform").statistic
        assert ks <= 1.36 / np.sqrt(cfg.n_mc)

    def test_p10_diagonal_min_of_uniforms(self):
        design = _orthonormal_design(10)
        omega = ridge_covariance(design, np.eye(design.size), 1e-3)
        offdiag = omega.dense() - np.diag(omega.diag)
        assert np.max(np.abs(offdiag)) < 1e-12  # truly diagonal
        cfg = InferenceConfig(n_mc=20_000, seed=12)
        null = estimate_null_distribution(
            design, np.eye(design.size), 1e-3, cfg
        )
        grid = np.linspace(0.0, 1.0, 2001)
        target = 1.0 - (1.0 - grid) ** 10
        ks = np.max(np.abs(null.cdf(grid) - target))
        assert ks <= 0.02

    def test_sigma_free_for_iid(self):
        # standardization cancels the noise scale exactly
        design = _orthonormal_design(5)
        cfg = _quiet_cfg(n_mc=5_000, seed=13)
        a = estimate_null_distribution(design, np.eye(design.size), 1e-3, cfg)
        b = estimate_null_distribution(
            design, 7.3 * np.eye(design.size), 1e-3, cfg
        )
        np.testing.assert_allclose(a.samples, b.samples, atol=1e-12)

    def test_shared_gauss_must_cover_rank(self):
        design = _orthonormal_design(6)
        cfg = _quiet_cfg(n_mc=5_000, seed=14)
        gauss = np.zeros((5_000, 2))  # rank is 6: too narrow
        with pytest.raises(ConfigError):
            estimate_null_distribution(
                design, np.eye(design.size), 1e-3, cfg, gauss=gauss
            )


class TestPointwisePipeline:
    def test_zero_response_contract(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((60, 5))
        data = Dataset(X=X, y=np.zeros(60))
        fit = pointwise_fit(data, 0.5, inf_cfg=_quiet_cfg(n_mc=2000, seed=0))
        assert fit.sigma_hat == 0.0
        np.testing.assert_array_equal(fit.raw_p, np.ones(5))
        np.testing.assert_array_equal(fit.adj_p, np.ones(5))
        assert fit.rejected.size == 0

    def test_scale_invariance_at_xi_zero(self):
        rng = np.random.default_rng(2)
        data = _toy_data(rng)
        cfg = _quiet_cfg(n_mc=2000, seed=3, xi=0.0)
        a = pointwise_fit(data, 0.5, inf_cfg=cfg)
        b = pointwise_fit(Dataset(X=data.X, y=3.0 * data.y), 0.5, inf_cfg=cfg)
        np.testing.assert_allclose(a.raw_p, b.raw_p, atol=1e-9)
        np.testing.assert_allclose(a.adj_p, b.adj_p, atol=1e-9)
        np.testing.assert_allclose(
            3.0 * a.estimate.beta_hat, b.estimate.beta_hat, rtol=1e-9
        )

    def test_degenerate_variance_through_pipeline(self):
        rng = np.random.default_rng(4)
        n = 60
        X = rng.standard_normal((n, 4))
        y = 5.0 * X[:, 0]  # exact fit, huge signal
        data = Dataset(X=X, y=y)
        model = ErrorCovModel.known_matrix(np.zeros((n, n)))
        with pytest.raises(DegenerateVarianceError):
            pointwise_fit(
                data,
                0.5,
                err_model=model,
                inf_cfg=_quiet_cfg(n_mc=2000, seed=5),
                lasso_cfg=LassoConfig(lambda1=1e-6),
            )

    def test_keep_null_attaches_distribution(self):
        rng = np.random.default_rng(6)
        data = _toy_data(rng)
        fit = pointwise_fit(
            data,
            0.5,
            inf_cfg=_quiet_cfg(n_mc=2000, seed=7),
            keep_null=True,
        )
        assert fit.null is not None and fit.null.n_mc == 2000
        assert np.all(np.diff(fit.null.samples) >= 0)


class TestInferPath:
    def _data(self, seed=8, n=60, p=5):
        rng = np.random.default_rng(seed)
        return _toy_data(rng, n=n, p=p)

    def test_grid_outside_interior(self):
        data = self._data()
        with pytest.raises(BoundaryError):
            infer_path(
                data,
                grid=[0.05, 0.5],
                inf_cfg=_quiet_cfg(n_mc=2000, seed=0),
            )

    def test_singleton_grid_equals_pointwise(self):
        data = self._data()
        cfg = _quiet_cfg(n_mc=2000, seed=9)
        path = infer_path(data, grid=[0.5], inf_cfg=cfg)
        single = pointwise_fit(data, 0.5, inf_cfg=cfg)
        np.testing.assert_array_equal(path.fits[0].raw_p, single.raw_p)
        np.testing.assert_array_equal(path.fits[0].adj_p, single.adj_p)

    def test_thread_count_determinism(self):
        data = self._data()
        cfg = _quiet_cfg(n_mc=2000, seed=10)
        serial = infer_path(data, inf_cfg=cfg, n_jobs=1)
        threaded = infer_path(data, inf_cfg=cfg, n_jobs=4)
        for a, b in zip(serial.fits, threaded.fits):
            np.testing.assert_array_equal(a.adj_p, b.adj_p)
            np.testing.assert_array_equal(
                a.estimate.beta_hat, b.estimate.beta_hat
            )

    def test_banded_model_pools_residuals(self):
        data = self._data(n=100)
        cfg = _quiet_cfg(n_mc=2000, seed=11)
        path = infer_path(
            data, err_model=ErrorCovModel.banded(rho=1.5), inf_cfg=cfg
        )
        assert not path.failures

    def test_failures_collected_not_raised(self):
        data = self._data()
        cfg = _quiet_cfg(n_mc=2000, seed=12)
        bad = LassoConfig(max_iter=1, conv_tol=1e-16)
        path = infer_path(data, lasso_cfg=bad, inf_cfg=cfg)
        assert len(path.failures) == path.grid.size
        assert all(f is None for f in path.fits)
        stages = {str(err) for _, _, err in path.failures}
        assert any("[" in s for s in stages)  # stage tag present

    def test_fail_fast_raises(self):
        data = self._data()
        bad = LassoConfig(max_iter=1, conv_tol=1e-16)
        with pytest.raises(Exception):
            infer_path(
                data,
                lasso_cfg=bad,
                inf_cfg=_quiet_cfg(n_mc=2000, seed=13),
                fail_fast=True,
            )

    def test_adjusted_matrix_shape(self):
        data = self._data()
        cfg = _quiet_cfg(n_mc=2000, seed=14)
        path = infer_path(data, grid=[0.4, 0.5, 0.6], inf_cfg=cfg)
        adj = path.adjusted()
        assert adj.shape == (3, 5)
        assert np.all((adj >= 0) & (adj <= 1))


class TestPooledResiduals:
    def test_noiseless_signal_small_residuals(self):
        rng = np.random.default_rng(15)
        n, p = 120, 4
        X = rng.standard_normal((n, p))
        y = 2.0 * X[:, 0]
        data = Dataset(X=X, y=y)
        resid = pooled_residuals(data, KernelSpec("uniform", 0.15))
        assert resid.shape == (n,)
        # lasso shrinkage leaves some bias, but residuals are far below
        # the signal scale
        assert np.sqrt(np.mean(resid**2)) < 0.5 * np.sqrt(np.mean(y**2))
