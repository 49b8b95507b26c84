"""Pointwise significance tests with Monte-Carlo familywise calibration.

For each test location t the pipeline runs: kernel weights, weighted
design, thin SVD, lasso pilot, ridge fit, bias correction, then p-values.
Raw p-values deflate the corrected estimate by the projection cross-talk
term

    P_tilde_j = 2 [1 - Phi( (|beta_hat_j| - lambda1^(1-xi)
                 max_{k != j} |(P_{R_t})_{jk}|)_+ / sqrt(Omega_jj) )],

and familywise calibration compares them against the Monte-Carlo law of
the minimum p-value

    F(z) = P( min_j 2[1 - Phi(|V_j| / sqrt(Omega_jj))] <= z ),  V ~ N(0, Omega),

sampled through the factored covariance, r-dimensional draws mapped by the
p x r factor at O(p r) per draw.  Since every statistic is standardized by
sqrt(Omega_jj), a common scale on the error covariance cancels, so for iid
errors the null law never depends on sigma.  The adjusted values are
P_j = F_hat(min(1, P_tilde_j + zeta)); coordinate j is rejected at level
alpha when P_j <= alpha.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .errors import (
    BoundaryError,
    ConfigError,
    DegenerateVarianceError,
    TVInferError,
)
from .errorcov import ErrorCovModel, build_sigma_et
from .estimator import bias_correct, tv_ridge
from .lasso import (
    LassoConfig,
    cross_validate_lambda1,
    recommend_lambda,
    scaled_lasso_sigma,
    weighted_lasso,
)
from .localdesign import (
    DEFAULT_RANK_TOL,
    build_local_design,
    interior_grid,
    kernel_weights,
    KernelSpec,
    ridge_covariance,
    svd_projection,
)

__all__ = [
    "InferenceConfig",
    "NullDistribution",
    "PointwiseFit",
    "PathResult",
    "raw_pvalues",
    "estimate_null_distribution",
    "adjust_pvalues",
    "test_pointwise",
    "infer_path",
    "rng_stream",
]

_SQRT2 = np.sqrt(2.0)

#: spawn-key labels for derived RNG streams, so every consumer of the seed
#: gets an independent substream keyed by purpose (and index where needed).
STREAM_NULL = 0
STREAM_DATA = 1
STREAM_REPLICATION = 2


def rng_stream(seed, *key):
    """Independent deterministic generator derived from (seed, key)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass(frozen=True)
class InferenceConfig:
    """Settings for p-value construction and Monte-Carlo calibration.

    ``xi`` is the exponent softening the projection cross-talk correction,
    ``zeta`` a nonnegative slack added to raw p-values before adjustment,
    ``n_mc`` the number of Monte-Carlo draws behind the null distribution
    (at least 1000; below 10000 a warning flags coarse tail calibration),
    and ``seed`` the 64-bit root of all derived random streams.
    """

    alpha: float = 0.05
    xi: float = 0.05
    zeta: float = 0.0
    n_mc: int = 50_000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 <= self.xi < 1.0:
            raise ConfigError(f"xi must lie in [0, 1), got {self.xi}")
        if self.zeta < 0.0:
            raise ConfigError(f"zeta must be nonnegative, got {self.zeta}")
        if self.n_mc < 1000:
            raise ConfigError(f"n_mc must be at least 1000, got {self.n_mc}")
        if self.n_mc < 10_000:
            warnings.warn(
                f"n_mc = {self.n_mc} below 10000: tail calibration is coarse",
                stacklevel=2,
            )
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a nonnegative 64-bit integer")


@dataclass(frozen=True)
class NullDistribution:
    """Sorted Monte-Carlo sample of the minimum p-value statistic."""

    samples: np.ndarray

    @property
    def n_mc(self):
        return self.samples.size

    def cdf(self, z):
        """Right-continuous empirical CDF F_hat(z)."""
        z = np.asarray(z, dtype=float)
        out = np.searchsorted(self.samples, z, side="right") / self.n_mc
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class PointwiseFit:
    """Full output of the pipeline at one test location."""

    estimate: object
    omega_diag: np.ndarray
    correction: np.ndarray
    raw_p: np.ndarray
    adj_p: np.ndarray
    rejected: np.ndarray
    lambda1: float
    sigma_hat: float | None
    null: object = None

    @property
    def t(self):
        return self.estimate.t


@dataclass(frozen=True)
class PathResult:
    """Fits across a grid; failed locations carry None plus an error record."""

    grid: np.ndarray
    fits: list
    failures: list

    def adjusted(self):
        """Adjusted p-values as a (G, p) matrix (NaN rows on failures)."""
        p = next(f for f in self.fits if f is not None).adj_p.size
        out = np.full((self.grid.size, p), np.nan)
        for g, fit in enumerate(self.fits):
            if fit is not None:
                out[g] = fit.adj_p
        return out


@contextmanager
def _stage(name):
    """Label library errors with the pipeline stage that raised them."""
    try:
        yield
    except TVInferError as err:
        if err.stage is None:
            err.stage = name
        raise


def raw_pvalues(estimate, design, omega_diag, lambda1, xi):
    """Raw pointwise p-values with the projection cross-talk correction.

    Returns
    -------
    raw_p : ndarray of shape (p,)
        Values in [0, 1]; a zero corrected statistic maps to 1.
    correction : ndarray of shape (p,)
        The deflation lambda1^(1-xi) * max_{k != j} |(P_{R_t})_{jk}|.

    Raises
    ------
    DegenerateVarianceError
        If some coordinate has a strictly positive corrected statistic but
        zero variance Omega_jj.
    """
    if not 0.0 <= xi < 1.0:
        raise ConfigError(f"xi must lie in [0, 1), got {xi}")
    if not lambda1 > 0:
        raise ConfigError(f"lambda1 must be positive, got {lambda1}")
    omega_diag = np.asarray(omega_diag, dtype=float)
    correction = lambda1 ** (1.0 - xi) * design.projection_offdiag_max()
    excess = np.abs(estimate.beta_hat) - correction
    np.clip(excess, 0.0, None, out=excess)
    stat = np.zeros_like(excess)
    live = excess > 0.0
    if np.any(live & (omega_diag <= 0.0)):
        j = int(np.nonzero(live & (omega_diag <= 0.0))[0][0])
        raise DegenerateVarianceError(
            f"coordinate {j} has zero variance but a nonzero statistic",
            index=j,
        )
    stat[live] = excess[live] / np.sqrt(omega_diag[live])
    raw = erfc(stat / _SQRT2)
    return raw, correction


def _minp_sample(omega, n_mc, gauss, block=4096):
    """Monte-Carlo sample of min_j 2(1 - Phi(|V_j|/sqrt(Omega_jj)))."""
    diag = omega.diag
    live = diag > 0.0
    r = omega.factor.shape[1]
    if r == 0 or not np.any(live):
        return np.ones(n_mc)
    std_factor = omega.factor[live] / np.sqrt(diag[live])[:, None]
    A = np.ascontiguousarray(std_factor.T)
    out = np.empty(n_mc)
    for start in range(0, n_mc, block):
        stop = min(start + block, n_mc)
        V = gauss[start:stop, :r] @ A
        out[start:stop] = np.max(np.abs(V), axis=1)
    return erfc(out / _SQRT2)


def estimate_null_distribution(
    design, sigma_et, lambda2, cfg, gauss=None, omega=None
):
    """Monte-Carlo null distribution of the minimum p-value at one location.

    ``V ~ N(0, Omega)`` is sampled through the p x r factor of Omega with
    r-dimensional standard normal draws, O(p r) per draw.  Because each
    coordinate is standardized by sqrt(Omega_jj), rescaling the error
    covariance cancels, so for iid errors the result does not depend on
    the noise level.

    Parameters
    ----------
    gauss : ndarray, optional
        Pre-drawn standard normals of shape (n_mc, >= r); passing the same
        block across locations implements common random numbers.  Drawn
        from the config seed when omitted.

    Returns
    -------
    NullDistribution
        Sorted sample of size ``cfg.n_mc``.
    """
    if omega is None:
        omega = ridge_covariance(design, sigma_et, lambda2)
    r = omega.factor.shape[1]
    if gauss is None:
        gauss = rng_stream(cfg.seed, STREAM_NULL).standard_normal(
            (cfg.n_mc, r)
        )
    if gauss.shape[0] < cfg.n_mc or gauss.shape[1] < r:
        raise ConfigError(
            f"gauss block of shape {gauss.shape} is too small for "
            f"n_mc = {cfg.n_mc}, r = {r}"
        )
    sample = _minp_sample(omega, cfg.n_mc, gauss)
    sample.sort()
    return NullDistribution(samples=sample)


def adjust_pvalues(raw_p, null, zeta=0.0):
    """Familywise-adjusted p-values P_j = F_hat(min(1, raw_j + zeta))."""
    if zeta < 0.0:
        raise ConfigError(f"zeta must be nonnegative, got {zeta}")
    shifted = np.minimum(1.0, np.asarray(raw_p, dtype=float) + zeta)
    return null.cdf(shifted)


def _gauss_columns(n, bandwidth, p):
    """Upper bound on the SVD rank of any kernel-local design."""
    return min(int(2 * n * bandwidth) + 2, p)


def _resolve_sigma(design, err_model, lasso_cfg, lambda1):
    """Noise level used for the error covariance and penalty recommendation.

    Returns None when nothing downstream needs it (explicit penalty and a
    covariance model that carries its own scale).
    """
    needs_penalty_sigma = lambda1 is None
    if err_model.kind == "iid_known":
        return err_model.sigma
    if err_model.kind == "iid_estimated":
        return scaled_lasso_sigma(design, lasso_cfg)
    if err_model.kind == "known_matrix":
        if needs_penalty_sigma:
            idx = design.indices
            return float(np.sqrt(np.mean(np.diag(err_model.matrix)[idx])))
        return None
    if err_model.kind == "banded":
        if needs_penalty_sigma:
            return scaled_lasso_sigma(design, lasso_cfg)
        return None
    raise ConfigError(f"unknown error covariance kind {err_model.kind!r}")


def _build_design(data, t, spec):
    with _stage("local_design"):
        indices, weights = kernel_weights(spec, t, data.n)
        return build_local_design(data, indices, weights, t=t)


def _phase1(data, t, spec, lasso_cfg, err_model, regime):
    """Design, noise level, penalty and lasso pilot at one location."""
    design = _build_design(data, t, spec)
    with _stage("noise_level"):
        lam = lasso_cfg.lambda1
        explicit = lam is not None and np.isscalar(lam)
        sigma_hat = _resolve_sigma(
            design, err_model, lasso_cfg, lam if explicit else None
        )
    with _stage("lasso"):
        if lam is None:
            _, lambda1 = recommend_lambda(
                design, regime, sigma=sigma_hat, ratio=lasso_cfg.lambda_ratio
            )
        elif np.isscalar(lam):
            lambda1 = float(lam)
        else:
            lambda1 = cross_validate_lambda1(data, spec, t, lam, lasso_cfg)
        beta_tilde = weighted_lasso(design, lambda1, lasso_cfg)
    return design, sigma_hat, lambda1, beta_tilde


def _phase2(
    design,
    sigma_hat,
    lambda1,
    beta_tilde,
    lambda2,
    err_model,
    inf_cfg,
    gauss,
    residuals,
    rank_tol,
    keep_null=False,
    sigma_cache=None,
):
    with _stage("svd"):
        design = svd_projection(design, rank_tol)
    with _stage("ridge"):
        theta_tilde = tv_ridge(design, lambda2)
        estimate = bias_correct(theta_tilde, beta_tilde, design)
    with _stage("error_cov"):
        sigma_et = build_sigma_et(
            err_model,
            design,
            residuals=residuals,
            sigma_hat=sigma_hat,
            cache=sigma_cache,
        )
    with _stage("null_distribution"):
        omega = ridge_covariance(design, sigma_et, lambda2)
        null = estimate_null_distribution(
            design, sigma_et, lambda2, inf_cfg, gauss=gauss, omega=omega
        )
    with _stage("pvalues"):
        raw, correction = raw_pvalues(
            estimate, design, omega.diag, lambda1, inf_cfg.xi
        )
        adj = adjust_pvalues(raw, null, inf_cfg.zeta)
        rejected = np.nonzero(adj <= inf_cfg.alpha)[0]
    return PointwiseFit(
        estimate=estimate,
        omega_diag=omega.diag,
        correction=correction,
        raw_p=raw,
        adj_p=adj,
        rejected=rejected,
        lambda1=lambda1,
        sigma_hat=sigma_hat,
        null=null if keep_null else None,
    )


def pooled_residuals(data, spec, lasso_cfg=None, regime=None, pilots=None):
    """Residuals r_i = y_i - x_i^T beta_tilde(t_i) pooled over the sample.

    Each observation is evaluated at its own time index; observations
    outside the interior domain use the nearest interior grid point.
    ``pilots`` may carry already-fitted beta_tilde vectors keyed by
    interior grid index to avoid refitting.
    """
    lasso_cfg = lasso_cfg or LassoConfig()
    n = data.n
    grid = interior_grid(n, spec.bandwidth)
    betas = {}
    for g, t in enumerate(grid):
        if pilots is not None and g in pilots:
            betas[g] = pilots[g]
            continue
        design = _build_design(data, t, spec)
        lam = lasso_cfg.lambda1
        if lam is None:
            sigma = scaled_lasso_sigma(design, lasso_cfg)
            _, lambda1 = recommend_lambda(
                design, regime, sigma=sigma, ratio=lasso_cfg.lambda_ratio
            )
        elif np.isscalar(lam):
            lambda1 = float(lam)
        else:
            lambda1 = cross_validate_lambda1(data, spec, t, lam, lasso_cfg)
        betas[g] = weighted_lasso(design, lambda1, lasso_cfg)
    times = data.times
    first, last = grid[0], grid[-1]
    positions = np.clip(
        np.round(np.clip(times, first, last) * n).astype(int)
        - int(round(first * n)),
        0,
        grid.size - 1,
    )
    residuals = np.empty(n)
    for i in range(n):
        residuals[i] = data.y[i] - data.X[i] @ betas[positions[i]]
    return residuals


def grid_position(t, n, bandwidth):
    """Index of location t within the interior grid, or None if off-grid."""
    grid = interior_grid(n, bandwidth)
    pos = int(round(t * n)) - int(round(grid[0] * n))
    if 0 <= pos < grid.size and abs(grid[pos] - t) < 1e-9:
        return pos
    return None


def test_pointwise(
    data,
    t,
    spec=None,
    lasso_cfg=None,
    lambda2=None,
    err_model=None,
    inf_cfg=None,
    regime=None,
    rank_tol=DEFAULT_RANK_TOL,
    gauss=None,
    residuals=None,
    keep_null=False,
):
    """Run the full pointwise testing pipeline at a single location.

    Parameters
    ----------
    data : Dataset
    t : float
        Test location in the interior domain [b_n, 1 - b_n].
    spec : KernelSpec, optional
        Kernel and bandwidth (default uniform, b_n = 0.1).
    lasso_cfg : LassoConfig, optional
        ``lambda1`` semantics: float = use directly, sequence =
        cross-validate, None = recommended level for ``regime``.
    lambda2 : float, optional
        Ridge penalty; defaults to 1/n.
    err_model : ErrorCovModel, optional
        Defaults to iid with scaled-lasso noise level.
    inf_cfg : InferenceConfig, optional
    regime : PenaltyRegime, optional
        Error regime for the recommended penalty (default iid).
    gauss : ndarray, optional
        Shared standard-normal block for common random numbers across
        locations; drawn from the config seed when omitted.
    residuals : ndarray, optional
        Pooled residuals for the banded error model; computed over the
        full interior grid when needed and omitted.
    keep_null : bool
        Attach the Monte-Carlo null distribution to the result (off by
        default; the sorted sample is n_mc floats).

    Returns
    -------
    PointwiseFit
    """
    spec = spec or KernelSpec()
    lasso_cfg = lasso_cfg or LassoConfig()
    err_model = err_model or ErrorCovModel.iid_estimated()
    inf_cfg = inf_cfg or InferenceConfig()
    if lambda2 is None:
        lambda2 = 1.0 / data.n
    if err_model.kind == "banded" and residuals is None:
        residuals = pooled_residuals(data, spec, lasso_cfg, regime)
    design, sigma_hat, lambda1, beta_tilde = _phase1(
        data, t, spec, lasso_cfg, err_model, regime
    )
    if gauss is None:
        cap = _gauss_columns(data.n, spec.bandwidth, data.p)
        gauss = rng_stream(inf_cfg.seed, STREAM_NULL).standard_normal(
            (inf_cfg.n_mc, cap)
        )
    return _phase2(
        design,
        sigma_hat,
        lambda1,
        beta_tilde,
        lambda2,
        err_model,
        inf_cfg,
        gauss,
        residuals,
        rank_tol,
        keep_null=keep_null,
    )


def infer_path(
    data,
    grid=None,
    spec=None,
    lasso_cfg=None,
    lambda2=None,
    err_model=None,
    inf_cfg=None,
    regime=None,
    rank_tol=DEFAULT_RANK_TOL,
    n_jobs=1,
    fail_fast=False,
):
    """Run the pointwise pipeline over a grid of locations.

    The Monte-Carlo draws behind the null distribution are generated once
    from the config seed and shared across locations (common random
    numbers), and each location's work is otherwise pure, so results are
    identical for any ``n_jobs``.  Per-location failures are collected in
    ``PathResult.failures`` unless ``fail_fast`` is set.

    Parameters
    ----------
    grid : array-like, optional
        Locations inside [b_n, 1 - b_n]; defaults to every observation
        time in the interior domain.
    n_jobs : int
        Worker threads; 1 runs serially.

    Returns
    -------
    PathResult
    """
    spec = spec or KernelSpec()
    lasso_cfg = lasso_cfg or LassoConfig()
    err_model = err_model or ErrorCovModel.iid_estimated()
    inf_cfg = inf_cfg or InferenceConfig()
    if lambda2 is None:
        lambda2 = 1.0 / data.n
    if grid is None:
        grid = interior_grid(data.n, spec.bandwidth)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ConfigError("grid must be a nonempty 1-d array of locations")
    lo, hi = spec.interior()
    outside = grid[(grid < lo - 1e-12) | (grid > hi + 1e-12)]
    if outside.size:
        raise BoundaryError(
            f"grid locations {outside[:5].tolist()} lie outside "
            f"the interior domain [{lo}, {hi}]"
        )
    cap = _gauss_columns(data.n, spec.bandwidth, data.p)
    gauss = rng_stream(inf_cfg.seed, STREAM_NULL).standard_normal(
        (inf_cfg.n_mc, cap)
    )

    pilots, failures = _parallel_map(
        lambda t: _phase1(data, t, spec, lasso_cfg, err_model, regime),
        grid,
        n_jobs,
        fail_fast,
    )

    residuals = None
    if err_model.kind == "banded":
        reuse = {}
        for g, t in enumerate(grid):
            if pilots[g] is None:
                continue
            pos = grid_position(t, data.n, spec.bandwidth)
            if pos is not None:
                reuse[pos] = pilots[g][3]
        residuals = pooled_residuals(
            data, spec, lasso_cfg, regime, pilots=reuse
        )

    sigma_cache = {} if err_model.kind == "banded" else None

    def finish(g):
        design, sigma_hat, lambda1, beta_tilde = pilots[g]
        return _phase2(
            design,
            sigma_hat,
            lambda1,
            beta_tilde,
            lambda2,
            err_model,
            inf_cfg,
            gauss,
            residuals,
            rank_tol,
            sigma_cache=sigma_cache,
        )

    live = [g for g in range(grid.size) if pilots[g] is not None]
    finished, more_failures = _parallel_map(
        finish, live, n_jobs, fail_fast, labels=[grid[g] for g in live]
    )
    fits = [None] * grid.size
    for slot, g in enumerate(live):
        fits[g] = finished[slot]
    failures.extend((live[slot], t, err) for slot, t, err in more_failures)
    failures.sort(key=lambda rec: rec[1])
    return PathResult(grid=grid, fits=fits, failures=failures)


def _parallel_map(fn, items, n_jobs, fail_fast, labels=None):
    """Map fn over items, collecting TVInferError per item unless fail_fast.

    Results come back in input order regardless of worker count, so thread
    counts never change output.  Failure records are (position, label,
    error) with label defaulting to the item itself.
    """
    if labels is None:
        labels = items
    values = [None] * len(items)
    failures = []
    if n_jobs is None:
        n_jobs = 1
    if n_jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(fn, item) for item in items]
            for pos, future in enumerate(futures):
                try:
                    values[pos] = future.result()
                except TVInferError as err:
                    if fail_fast:
                        raise
                    failures.append((pos, float(labels[pos]), err))
    else:
        for pos, item in enumerate(items):
            try:
                values[pos] = fn(item)
            except TVInferError as err:
                if fail_fast:
                    raise
                failures.append((pos, float(labels[pos]), err))
    return values, failures
