"""Kernel-weighted lasso solver and penalty-level recommendations.

The local lasso solves

    min_b |𝒴_t - 𝒳_t b|_2^2 + lambda1 |b|_1

by cyclic coordinate descent with residual updates and warm starts.  The
module also provides the theory-guided penalty levels lambda0 built from
the local design norms L_{t,l} = max_j (sum_i w(i,t)^l X_ij^2)^{1/2} for
four error regimes (iid, short-range dependent, long-range dependent,
heavy-tailed), a scaled-lasso noise-level estimator, and K-fold
cross-validation over a penalty grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConfigError, ConvergenceError

__all__ = [
    "LassoConfig",
    "PenaltyRegime",
    "weighted_lasso",
    "lasso_objective",
    "kkt_residual",
    "recommend_lambda",
    "design_l_value",
    "scaled_lasso_sigma",
    "cross_validate_lambda1",
]

#: Penalty levels are floored here so degenerate inputs (p = 1, sigma = 0)
#: still produce a strictly positive penalty.
LAMBDA_FLOOR = 1e-12


@dataclass(frozen=True)
class LassoConfig:
    """Solver settings for the weighted lasso.

    ``lambda1`` may be a positive float (used directly), a sequence of
    positive floats (cross-validation grid) or None (use the recommended
    level for the chosen error regime).  ``max_iter`` caps the total number
    of coordinate sweeps, ``conv_tol`` is the KKT tolerance on the
    subgradient conditions, and ``cv_folds`` the number of interleaved
    folds used by :func:`cross_validate_lambda1`.  ``lambda_ratio`` is the
    lambda1 / lambda0 multiplier handed to :func:`recommend_lambda` when
    ``lambda1`` is None; the default 2 absorbs the theory's unknown
    non-stationarity constant, while sqrt(2)/2 recovers the universal
    threshold 2 sigma L_{t,2} sqrt(2 log p).
    """

    lambda1: float | tuple | list | None = None
    max_iter: int = 2000
    conv_tol: float = 1e-8
    cv_folds: int = 5
    lambda_ratio: float = 2.0

    def __post_init__(self):
        if not self.lambda_ratio > 0:
            raise ConfigError(
                f"lambda_ratio must be positive, got {self.lambda_ratio}"
            )
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.conv_tol <= 0:
            raise ConfigError(f"conv_tol must be positive, got {self.conv_tol}")
        if self.cv_folds < 2:
            raise ConfigError(f"cv_folds must be >= 2, got {self.cv_folds}")
        lam = self.lambda1
        if lam is None:
            return
        if np.isscalar(lam):
            if not lam > 0:
                raise ConfigError(f"lambda1 must be positive, got {lam}")
        else:
            vals = np.asarray(lam, dtype=float)
            if vals.ndim != 1 or vals.size == 0 or np.any(vals <= 0):
                raise ConfigError(
                    "lambda1 grid must be a nonempty 1-d sequence of "
                    "positive values"
                )


@dataclass(frozen=True)
class PenaltyRegime:
    """Error regime behind a lambda0 recommendation.

    Use the constructors :meth:`iid`, :meth:`srd`, :meth:`lrd`,
    :meth:`heavy_tail` rather than filling fields by hand.
    """

    kind: str
    a_l1: float = 1.0
    rho: float = 0.75
    C: float = 1.0
    q: float = 4.0
    C_q: float = 2.0

    @classmethod
    def iid(cls):
        """Independent errors with a Gaussian-type tail."""
        return cls(kind="iid")

    @classmethod
    def srd(cls, a_l1):
        """Short-range dependent linear-process errors.

        ``a_l1`` is the l1 norm of the moving-average coefficients.
        """
        if not a_l1 > 0:
            raise ConfigError(f"a_l1 must be positive, got {a_l1}")
        return cls(kind="srd", a_l1=float(a_l1))

    @classmethod
    def lrd(cls, rho, C=1.0):
        """Long-range dependent errors with coefficient decay (m+1)^-rho."""
        if not 0.5 < rho < 1.0:
            raise ConfigError(f"lrd requires rho in (1/2, 1), got {rho}")
        if not C > 0:
            raise ConfigError(f"C must be positive, got {C}")
        return cls(kind="lrd", rho=float(rho), C=float(C))

    @classmethod
    def heavy_tail(cls, q, C_q=2.0):
        """Errors with q-th moments only, q > 2."""
        if not q > 2:
            raise ConfigError(f"heavy_tail requires q > 2, got {q}")
        if not C_q > 0:
            raise ConfigError(f"C_q must be positive, got {C_q}")
        return cls(kind="heavy_tail", q=float(q), C_q=float(C_q))


@njit(cache=True, nogil=True)
def _cd_sweeps(X, y, lam_half, beta, colsq, max_sweeps, delta_tol):
    """Cyclic coordinate descent sweeps on the residual; mutates beta."""
    m, p = X.shape
    r = y.copy()
    for j in range(p):
        bj = beta[j]
        if bj != 0.0:
            for i in range(m):
                r[i] -= X[i, j] * bj
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        max_delta = 0.0
        for j in range(p):
            cj = colsq[j]
            if cj <= 0.0:
                continue
            bj = beta[j]
            rho = bj * cj
            for i in range(m):
                rho += X[i, j] * r[i]
            if rho > lam_half:
                bn = (rho - lam_half) / cj
            elif rho < -lam_half:
                bn = (rho + lam_half) / cj
            else:
                bn = 0.0
            d = bn - bj
            if d != 0.0:
                beta[j] = bn
                for i in range(m):
                    r[i] -= d * X[i, j]
                ad = abs(d)
                if ad > max_delta:
                    max_delta = ad
        if max_delta <= delta_tol:
            break
    return sweeps


def lasso_objective(design, beta, lambda1):
    """Objective |𝒴_t - 𝒳_t b|_2^2 + lambda1 |b|_1."""
    resid = design.Yt - design.Xt @ beta
    return float(resid @ resid + lambda1 * np.abs(beta).sum())


def kkt_residual(design, beta, lambda1):
    """Worst violation of the lasso subgradient conditions.

    For g = 2 𝒳_t^T (𝒴_t - 𝒳_t b) this is the larger of
    max over zero coordinates of (|g_j| - lambda1)_+ and
    max over active coordinates of |g_j - lambda1 sign(b_j)|.
    """
    g = 2.0 * (design.Xt.T @ (design.Yt - design.Xt @ beta))
    active = beta != 0.0
    worst = 0.0
    if np.any(~active):
        worst = max(worst, float(np.max(np.abs(g[~active])) - lambda1))
    if np.any(active):
        worst = max(
            worst,
            float(np.max(np.abs(g[active] - lambda1 * np.sign(beta[active])))),
        )
    return max(worst, 0.0)


def weighted_lasso(design, lambda1, cfg=None, beta0=None):
    """Solve the kernel-weighted lasso at a single location.

    Parameters
    ----------
    design : LocalDesign
        Weighted design at the test location (SVD factors not required).
    lambda1 : float
        Positive l1 penalty on the objective |𝒴 - 𝒳 b|^2 + lambda1 |b|_1.
    cfg : LassoConfig, optional
        Solver settings; defaults are used when omitted.
    beta0 : ndarray, optional
        Warm-start coefficients.

    Returns
    -------
    beta : ndarray of shape (p,)
        Minimizer satisfying the KKT conditions within ``cfg.conv_tol``:
        |g_j| <= lambda1 + tol on zero coordinates and
        g_j = lambda1 sign(beta_j) within tol on active ones.

    Raises
    ------
    ConvergenceError
        If the sweep cap is reached first; carries the last iterate and
        its KKT residual.
    """
    cfg = cfg or LassoConfig()
    if not lambda1 > 0:
        raise ConfigError(f"lambda1 must be positive, got {lambda1}")
    X = np.asfortranarray(design.Xt)
    y = np.ascontiguousarray(design.Yt)
    p = X.shape[1]
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    if beta.shape != (p,):
        raise ConfigError(f"beta0 must have shape ({p},), got {beta.shape}")
    colsq = np.einsum("ij,ij->j", X, X)
    budget = cfg.max_iter
    delta_tol = cfg.conv_tol * 1e-2 / max(1.0, float(colsq.max(initial=1.0)))
    while budget > 0:
        used = _cd_sweeps(X, y, 0.5 * lambda1, beta, colsq, budget, delta_tol)
        budget -= used
        residual = kkt_residual(design, beta, lambda1)
        if residual <= cfg.conv_tol:
            return beta
        delta_tol *= 1e-2
    raise ConvergenceError(
        f"lasso did not meet KKT tolerance {cfg.conv_tol:g} within "
        f"{cfg.max_iter} sweeps (residual {residual:.3g})",
        last_iterate=beta,
        residual=residual,
    )


def design_l_value(design, ell):
    """Local design norm L_{t,l} = max_j (sum_i w(i,t)^l X_ij^2)^{1/2}.

    Computed from the weighted rows: since 𝒳_ij = sqrt(w_i) X_ij, the inner
    sum equals sum_i w_i^(l-1) 𝒳_ij^2.
    """
    if ell < 1:
        raise ConfigError(f"ell must be >= 1, got {ell}")
    w = design.weights ** (ell - 1)
    vals = np.einsum("i,ij->j", w, design.Xt**2)
    return float(np.sqrt(vals.max()))


def _mu_nq(design, q):
    """max_j sum_i |w(i,t) X_ij|^q, from the weighted rows."""
    w = design.weights ** (q / 2.0)
    vals = np.einsum("i,ij->j", w, np.abs(design.Xt) ** q)
    return float(vals.max())


def recommend_lambda(design, regime=None, sigma=1.0, ratio=2.0):
    """Theory-guided penalty levels (lambda0, lambda1) for a local design.

    The base level lambda0 depends on the error regime:

    - iid:         4 sigma L_{t,2} sqrt(log p)
    - srd:         4 sigma L_{t,2} |a|_1 sqrt(log p)
    - lrd:         C sigma L_{t,2} n^(1-rho) sqrt(log p)
    - heavy_tail:  C_q max{ (p mu_{n,q})^(1/q), sigma L_{t,2} sqrt(log p) }

    with mu_{n,q} = max_j sum_{i in N_t} |w(i,t) X_ij|^q.  The lasso level
    is lambda1 = ratio * lambda0 (default ratio 2).  Both are floored at
    1e-12 so degenerate inputs stay strictly positive.

    Returns
    -------
    (lambda0, lambda1) : tuple of float
    """
    regime = regime or PenaltyRegime.iid()
    if sigma < 0:
        raise ConfigError(f"sigma must be nonnegative, got {sigma}")
    if ratio <= 0:
        raise ConfigError(f"ratio must be positive, got {ratio}")
    p = design.p
    root_log_p = np.sqrt(np.log(p)) if p > 1 else 0.0
    l2 = design_l_value(design, 2)
    if regime.kind == "iid":
        lam0 = 4.0 * sigma * l2 * root_log_p
    elif regime.kind == "srd":
        lam0 = 4.0 * sigma * l2 * regime.a_l1 * root_log_p
    elif regime.kind == "lrd":
        lam0 = (
            regime.C
            * sigma
            * l2
            * design.n_total ** (1.0 - regime.rho)
            * root_log_p
        )
    elif regime.kind == "heavy_tail":
        mu = _mu_nq(design, regime.q)
        lam0 = regime.C_q * max(
            (p * mu) ** (1.0 / regime.q), sigma * l2 * root_log_p
        )
    else:
        raise ConfigError(f"unknown penalty regime kind {regime.kind!r}")
    lam0 = max(lam0, LAMBDA_FLOOR)
    return lam0, ratio * lam0


def scaled_lasso_sigma(design, cfg=None, max_rounds=50, tol=1e-6):
    """Noise level estimate by the scaled lasso.

    Alternates a lasso fit at penalty sigma_hat * lambda_univ, where
    lambda_univ = sqrt(2 log p / |N_t|), with the degrees-of-freedom
    corrected update

        sigma_hat^2 = |𝒴_t - 𝒳_t beta|_2^2 * |N_t| / max(|N_t| - s_hat, 1),

    s_hat the active-set size, until sigma_hat moves by less than ``tol``.

    The update map is piecewise in sigma_hat with a downward jump wherever
    the active set shrinks; when its fixed point falls on a jump, the
    alternation settles into a cycle around it instead of converging.  A
    revisited iterate is detected and resolved by bisecting the update map
    to the jump location, which is the generalized fixed point.

    Returns
    -------
    sigma_hat : float

    Raises
    ------
    ConvergenceError
        If ``max_rounds`` alternations pass without stabilizing or
        cycling; carries the sigma_hat trace.
    """
    cfg = cfg or LassoConfig()
    m = design.size
    p = design.p
    lam_univ = np.sqrt(2.0 * np.log(p) / m) if p > 1 else 0.0
    sigma = float(np.linalg.norm(design.Yt))
    if sigma == 0.0:
        return 0.0
    beta = np.zeros(p)

    def update(sig, warm):
        lam1 = max(sig * lam_univ, LAMBDA_FLOOR)
        b = weighted_lasso(design, lam1, cfg, beta0=warm)
        s_hat = int(np.count_nonzero(b))
        resid = design.Yt - design.Xt @ b
        return float(np.sqrt(resid @ resid * m / max(m - s_hat, 1))), b

    trace = [sigma]
    for _ in range(max_rounds):
        sigma_new, beta = update(sigma, beta)
        trace.append(sigma_new)
        if abs(sigma_new - sigma) < tol:
            return sigma_new
        revisit = [
            k for k, s in enumerate(trace[:-2])
            if abs(s - sigma_new) < 16.0 * tol
        ]
        if revisit:
            cycle = trace[revisit[0]:]
            lo, hi = min(cycle), max(cycle)
            for _ in range(200):
                if hi - lo < tol:
                    break
                mid = 0.5 * (lo + hi)
                val, beta = update(mid, beta)
                if val > mid:
                    lo = mid
                else:
                    hi = mid
            return 0.5 * (lo + hi)
        sigma = sigma_new
    raise ConvergenceError(
        f"scaled lasso did not stabilize in {max_rounds} rounds "
        f"(last change {abs(trace[-1] - trace[-2]):.3g})",
        trace=trace,
    )


def cross_validate_lambda1(data, spec, t, grid, cfg=None):
    """Pick lambda1 from a grid by K-fold out-of-fold weighted error.

    Folds interleave the neighborhood: the k-th fold holds out every K-th
    index of N_t (by position), respecting the time ordering.  For each
    grid value, fits run on the remaining rows of the weighted design and
    the held-out weighted squared error sum_i w_i (y_i - x_i^T beta)^2 is
    accumulated.  Ties pick the smallest lambda1 (least bias).

    Raises
    ------
    ConvergenceError
        If every grid value fails to converge on some fold.
    """
    from .localdesign import build_local_design, kernel_weights

    cfg = cfg or LassoConfig()
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0):
        raise ConfigError("grid must be a nonempty 1-d array of positive values")
    indices, weights = kernel_weights(spec, t, data.n)
    design = build_local_design(data, indices, weights, t=t)
    m = design.size
    folds = min(cfg.cv_folds, m)
    order = np.argsort(-grid)
    scores = np.zeros(grid.size)
    fits_ok = np.zeros(grid.size, dtype=int)
    position = np.arange(m)
    for k in range(folds):
        held = position % folds == k
        train = ~held
        sub = build_local_design(
            data, indices[train], weights[train], t=t
        )
        Xh = design.Xt[held]
        Yh = design.Yt[held]
        beta = None
        for gi in order:
            try:
                beta = weighted_lasso(sub, grid[gi], cfg, beta0=beta)
            except ConvergenceError:
                beta = None
                continue
            err = Yh - Xh @ beta
            scores[gi] += float(err @ err)
            fits_ok[gi] += 1
    valid = fits_ok == folds
    if not np.any(valid):
        raise ConvergenceError(
            "no grid value produced converged fits on all folds"
        )
    best = np.inf
    best_lam = None
    for gi in order:
        if valid[gi] and scores[gi] <= best:
            best = scores[gi]
            best_lam = grid[gi]
    return float(best_lam)
