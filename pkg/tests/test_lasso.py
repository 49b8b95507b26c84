"""Coordinate-descent lasso, penalty recommendations, scaled-lasso noise
level, cross-validation.  The solver oracle is closed-form soft
thresholding on orthonormal designs and a zooming grid search on tiny
instances; the final zoom step matches the target resolution of an
exhaustive 1e-3 grid."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvinfer import (
    ConfigError,
    ConvergenceError,
    Dataset,
    KernelSpec,
    LassoConfig,
    PenaltyRegime,
    build_local_design,
    cross_validate_lambda1,
    kernel_weights,
    kkt_residual,
    lasso_objective,
    recommend_lambda,
    scaled_lasso_sigma,
    weighted_lasso,
)
from tvinfer.lasso import LAMBDA_FLOOR, design_l_value


def _uniform_design(X, y):
    """Uniform weights over the whole sample (one big neighborhood)."""
    n = X.shape[0]
    data = Dataset(X=X, y=y)
    return build_local_design(
        data, np.arange(n), np.full(n, 1.0 / n), t=0.5
    )


def _soft(z, thresh):
    return np.sign(z) * np.maximum(np.abs(z) - thresh, 0.0)


def _grid_minimize(design, lambda1, radius=3.0, rounds=4, points=25):
    """Zooming coordinate-box grid search down to ~1e-3 resolution."""
    p = design.p
    center = np.zeros(p)
    width = radius
    best = None
    for _ in range(rounds):
        axes = [
            np.linspace(center[j] - width, center[j] + width, points)
            for j in range(p)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        B = np.stack([m.ravel() for m in mesh], axis=1)
        resid = design.Yt[None, :] - B @ design.Xt.T
        obj = np.einsum("ij,ij->i", resid, resid) + lambda1 * np.abs(B).sum(
            axis=1
        )
        k = int(np.argmin(obj))
        center = B[k]
        best = float(obj[k])
        width = 2.0 * width / (points - 1)  # next grid brackets the argmin
    return best, center


class TestWeightedLasso:
    def test_large_penalty_gives_zero(self):
        rng = np.random.default_rng(0)
        design = _uniform_design(
            rng.standard_normal((20, 5)), rng.standard_normal(20)
        )
        lam = 2.0 * float(np.max(np.abs(design.Xt.T @ design.Yt)))
        beta = weighted_lasso(design, lam * (1 + 1e-12))
        np.testing.assert_array_equal(beta, np.zeros(5))

    def test_orthonormal_soft_threshold(self):
        rng = np.random.default_rng(1)
        m, p = 24, 6
        Q, _ = np.linalg.qr(rng.standard_normal((m, p)))
        y = rng.standard_normal(m)
        data = Dataset(X=Q * np.sqrt(m), y=y * np.sqrt(m))
        design = build_local_design(
            data, np.arange(m), np.full(m, 1.0 / m)
        )
        # design.Xt = Q exactly, orthonormal columns
        lam = 0.8
        beta = weighted_lasso(design, lam)
        oracle = _soft(design.Xt.T @ design.Yt, lam / 2.0)
        np.testing.assert_allclose(beta, oracle, atol=1e-9)
        assert lasso_objective(design, beta, lam) <= lasso_objective(
            design, np.zeros(p), lam
        )

    @pytest.mark.parametrize("seed", range(6))
    def test_grid_search_oracle_p3(self, seed):
        rng = np.random.default_rng(seed)
        m, p = 20, 3
        X = rng.standard_normal((m, p))
        beta_true = np.array([1.5, 0.0, -0.7])
        y = X @ beta_true + 0.3 * rng.standard_normal(m)
        design = _uniform_design(X, y)
        lam = 0.2
        beta = weighted_lasso(design, lam)
        oracle_obj, _ = _grid_minimize(design, lam)
        assert lasso_objective(design, beta, lam) <= oracle_obj + 1e-4

    def test_kkt_residual_within_tol(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            X = rng.standard_normal((15, 8))
            y = rng.standard_normal(15)
            design = _uniform_design(X, y)
            lam = float(rng.uniform(0.05, 1.0))
            beta = weighted_lasso(design, lam)
            assert kkt_residual(design, beta, lam) <= 1e-8

    def test_warm_start_same_solution(self):
        rng = np.random.default_rng(3)
        design = _uniform_design(
            rng.standard_normal((25, 10)), rng.standard_normal(25)
        )
        cold = weighted_lasso(design, 0.3)
        warm = weighted_lasso(design, 0.3, beta0=cold + 0.05)
        np.testing.assert_allclose(cold, warm, atol=1e-7)

    def test_l1_monotone_in_lambda(self):
        rng = np.random.default_rng(4)
        design = _uniform_design(
            rng.standard_normal((30, 6)), rng.standard_normal(30)
        )
        grid = np.geomspace(2.0, 0.01, 12)
        norms = [
            float(np.abs(weighted_lasso(design, lam)).sum()) for lam in grid
        ]
        assert all(a <= b + 1e-9 for a, b in zip(norms, norms[1:]))

    def test_bad_lambda(self):
        rng = np.random.default_rng(5)
        design = _uniform_design(
            rng.standard_normal((10, 2)), rng.standard_normal(10)
        )
        with pytest.raises(ConfigError):
            weighted_lasso(design, 0.0)

    def test_nonconvergence_carries_iterate(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((40, 30))
        X += X[:, [0]] * 0.99  # heavy correlation slows the sweeps
        design = _uniform_design(X, rng.standard_normal(40))
        cfg = LassoConfig(max_iter=1, conv_tol=1e-14)
        with pytest.raises(ConvergenceError) as exc:
            weighted_lasso(design, 1e-8, cfg)
        assert exc.value.last_iterate is not None
        assert exc.value.residual > 0
        assert exc.value.exit_code == 4

    @settings(max_examples=25, deadline=None)
    @given(
        seed=st.integers(0, 10_000),
        lam=st.floats(0.01, 3.0),
        p=st.integers(1, 12),
    )
    def test_objective_never_worse_than_zero(self, seed, lam, p):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((18, p))
        y = rng.standard_normal(18)
        design = _uniform_design(X, y)
        beta = weighted_lasso(design, lam)
        assert (
            lasso_objective(design, beta, lam)
            <= lasso_objective(design, np.zeros(p), lam) + 1e-12
        )
        assert kkt_residual(design, beta, lam) <= 1e-8


class TestLassoConfig:
    def test_bad_folds(self):
        with pytest.raises(ConfigError):
            LassoConfig(cv_folds=1)

    def test_bad_max_iter(self):
        with pytest.raises(ConfigError):
            LassoConfig(max_iter=0)

    def test_negative_lambda(self):
        with pytest.raises(ConfigError):
            LassoConfig(lambda1=-1.0)

    def test_bad_lambda_ratio(self):
        with pytest.raises(ConfigError):
            LassoConfig(lambda_ratio=0.0)


class TestPenaltyRegime:
    def test_lrd_rho_range(self):
        with pytest.raises(ConfigError):
            PenaltyRegime.lrd(0.4)
        with pytest.raises(ConfigError):
            PenaltyRegime.lrd(1.0)

    def test_heavy_q_range(self):
        with pytest.raises(ConfigError):
            PenaltyRegime.heavy_tail(2.0)

    def test_srd_a_l1(self):
        with pytest.raises(ConfigError):
            PenaltyRegime.srd(0.0)


class TestRecommendLambda:
    def _standardized_design(self, rng, m=25, p=10):
        X = rng.choice([-1.0, 1.0], size=(m, p))  # exactly unit columns
        y = rng.standard_normal(m)
        return _uniform_design(X, y)

    def test_standardized_uniform_closed_form(self):
        rng = np.random.default_rng(7)
        design = self._standardized_design(rng)
        m, p = design.size, design.p
        assert abs(design_l_value(design, 1) - 1.0) < 1e-12
        assert abs(design_l_value(design, 2) - m**-0.5) < 1e-12
        lam0, lam1 = recommend_lambda(design, PenaltyRegime.iid(), sigma=1.3)
        expect = 4.0 * 1.3 * np.sqrt(np.log(p) / m)
        assert abs(lam0 - expect) < 1e-12
        assert abs(lam1 - 2.0 * lam0) < 1e-12

    def test_p_equals_one_floor(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((20, 1))
        design = _uniform_design(X, rng.standard_normal(20))
        lam0, lam1 = recommend_lambda(design, PenaltyRegime.iid())
        assert lam0 == LAMBDA_FLOOR and lam1 == 2.0 * LAMBDA_FLOOR

    def test_srd_white_noise_equals_iid(self):
        rng = np.random.default_rng(9)
        design = self._standardized_design(rng)
        iid = recommend_lambda(design, PenaltyRegime.iid(), sigma=0.8)
        srd = recommend_lambda(design, PenaltyRegime.srd(1.0), sigma=0.8)
        assert iid == srd

    @pytest.mark.parametrize(
        "regime",
        [
            PenaltyRegime.iid(),
            PenaltyRegime.srd(2.0),
            PenaltyRegime.lrd(0.75),
        ],
    )
    def test_homogeneous_in_sigma(self, regime):
        rng = np.random.default_rng(10)
        design = self._standardized_design(rng)
        lam_a, _ = recommend_lambda(design, regime, sigma=1.0)
        lam_b, _ = recommend_lambda(design, regime, sigma=2.0)
        assert abs(lam_b - 2.0 * lam_a) < 1e-12

    def test_lrd_uses_total_sample_size(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((200, 10))
        y = rng.standard_normal(200)
        data = Dataset(X=X, y=y)
        idx, w = kernel_weights(KernelSpec("uniform", 0.1), 0.5, 200)
        design = build_local_design(data, idx, w)
        rho = 0.75
        lam0, _ = recommend_lambda(design, PenaltyRegime.lrd(rho), sigma=1.0)
        l2 = design_l_value(design, 2)
        expect = l2 * 200 ** (1.0 - rho) * np.sqrt(np.log(10))
        assert abs(lam0 - expect) < 1e-12

    def test_heavy_tail_direct_oracle(self):
        rng = np.random.default_rng(12)
        n, p, q = 50, 6, 3.0
        X = rng.standard_normal((n, p))
        y = rng.standard_normal(n)
        data = Dataset(X=X, y=y)
        idx, w = kernel_weights(KernelSpec("epanechnikov", 0.3), 0.5, n)
        design = build_local_design(data, idx, w)
        # oracle straight from raw weights and raw design entries
        mu = np.max(
            np.sum(np.abs(w[:, None] * X[idx]) ** q, axis=0)
        )
        l2 = np.max(
            np.sqrt(np.sum(w[:, None] ** 2 * X[idx] ** 2, axis=0))
        )
        expect = 2.0 * max((p * mu) ** (1.0 / q), l2 * np.sqrt(np.log(p)))
        lam0, _ = recommend_lambda(
            design, PenaltyRegime.heavy_tail(q), sigma=1.0
        )
        assert abs(lam0 - expect) < 1e-12


class TestScaledLasso:
    def test_unit_noise_consistency(self):
        sigmas = []
        for seed in range(20):
            rng = np.random.default_rng(100 + seed)
            X = rng.standard_normal((500, 50))
            y = rng.standard_normal(500)
            sigmas.append(scaled_lasso_sigma(_uniform_design(X, y)))
        assert 0.9 <= np.mean(sigmas) <= 1.1

    def test_noiseless_goes_to_zero(self):
        rng = np.random.default_rng(13)
        X = rng.standard_normal((100, 10))
        beta = np.zeros(10)
        beta[0] = 1.0
        design = _uniform_design(X, X @ beta)
        assert scaled_lasso_sigma(design) < 1e-3

    def test_scale_equivariance(self):
        ratios = []
        for seed in range(20):
            rng = np.random.default_rng(200 + seed)
            X = rng.standard_normal((300, 30))
            e = rng.standard_normal(300)
            s1 = scaled_lasso_sigma(_uniform_design(X, e))
            s2 = scaled_lasso_sigma(_uniform_design(X, 2.0 * e))
            ratios.append(s2 / s1)
        assert 1.8 <= np.mean(ratios) <= 2.2

    def test_zero_response_short_circuit(self):
        rng = np.random.default_rng(14)
        X = rng.standard_normal((30, 5))
        design = _uniform_design(X, np.zeros(30))
        assert scaled_lasso_sigma(design) == 0.0

    def test_cycling_instances_resolve(self):
        # small neighborhoods make the df correction jump; these seeds
        # previously drove the bare alternation into 2-cycles
        rng = np.random.default_rng(1)
        X = rng.standard_normal((80, 6))
        y = X[:, 0] * 1.5 + 0.3 * rng.standard_normal(80)
        data = Dataset(X=X, y=y)
        spec = KernelSpec("uniform", 0.1)
        for t in [0.1625, 0.225, 0.3125, 0.3625]:
            idx, w = kernel_weights(spec, t, 80)
            design = build_local_design(data, idx, w)
            sigma = scaled_lasso_sigma(design)
            assert np.isfinite(sigma) and sigma > 0


class TestCrossValidation:
    def test_single_element_grid(self):
        rng = np.random.default_rng(15)
        X = rng.standard_normal((60, 5))
        y = rng.standard_normal(60)
        data = Dataset(X=X, y=y)
        spec = KernelSpec("uniform", 0.25)
        assert cross_validate_lambda1(data, spec, 0.5, [0.37]) == 0.37

    def test_planted_support_selects_moderate_lambda(self):
        rng = np.random.default_rng(16)
        n, p = 200, 8
        X = rng.standard_normal((n, p))
        beta = np.zeros(p)
        beta[:2] = [2.0, -1.5]
        y = X @ beta + 0.1 * rng.standard_normal(n)
        data = Dataset(X=X, y=y)
        spec = KernelSpec("uniform", 0.25)
        idx, w = kernel_weights(spec, 0.5, n)
        design = build_local_design(data, idx, w)
        lam_max = 2.0 * float(np.max(np.abs(design.Xt.T @ design.Yt)))
        grid = lam_max * np.geomspace(1.0, 1e-4, 12)
        lam = cross_validate_lambda1(data, spec, 0.5, grid)
        beta_cv = weighted_lasso(design, lam)
        assert set(np.nonzero(beta_cv)[0]) >= {0, 1}
        # the all-zero fit (largest lambda) must not win on a strong signal
        assert lam < lam_max

    def test_tie_breaks_to_smallest(self):
        rng = np.random.default_rng(17)
        X = rng.standard_normal((60, 4))
        y = rng.standard_normal(60)
        data = Dataset(X=X, y=y)
        spec = KernelSpec("uniform", 0.25)
        idx, w = kernel_weights(spec, 0.5, 60)
        design = build_local_design(data, idx, w)
        lam_max = 2.0 * float(np.max(np.abs(design.Xt.T @ design.Yt)))
        # both values give the all-zero fit on every fold: identical scores
        grid = [lam_max * 4.0, lam_max * 2.0]
        lam = cross_validate_lambda1(data, spec, 0.5, grid)
        assert lam == lam_max * 2.0

    def test_empty_grid(self):
        rng = np.random.default_rng(18)
        data = Dataset(
            X=rng.standard_normal((40, 3)), y=rng.standard_normal(40)
        )
        with pytest.raises(ConfigError):
            cross_validate_lambda1(data, KernelSpec("uniform", 0.25), 0.5, [])
