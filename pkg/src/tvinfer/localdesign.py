"""Kernel-localized design matrices and their SVD geometry.

Observations sit on the time grid t_i = i/n, i = 1..n.  A test location t
in the interior domain [b_n, 1 - b_n] selects the neighborhood
N_t = {i : |t_i - t| <= b_n} and Nadaraya-Watson weights

    w(i, t) = K((t_i - t) / b_n) / sum_m K((t_m - t) / b_n),

and the local estimation problem is posed on the weighted design with rows
sqrt(w(i, t)) * x_i.  Everything downstream (lasso, ridge, projections,
covariances) runs through the thin SVD of that weighted design, never
through dense p x p inverses.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    BoundaryError,
    ConfigError,
    DataError,
    DegenerateBandwidthError,
    NumericalError,
)

__all__ = [
    "Dataset",
    "KernelSpec",
    "LocalDesign",
    "RidgeCovariance",
    "kernel_weights",
    "build_local_design",
    "svd_projection",
    "ridge_covariance",
    "time_grid",
    "interior_grid",
]

#: Relative cutoff below which singular values count as numerically zero.
DEFAULT_RANK_TOL = 1e-10

#: Slack for floating-point comparisons on the time grid.
_T_EPS = 1e-12

_KERNELS = ("uniform", "epanechnikov", "triangular")


def time_grid(n):
    """Observation times t_i = i/n for i = 1..n as a float array."""
    return np.arange(1, n + 1) / n


def interior_grid(n, bandwidth):
    """All observation times inside the interior domain [b_n, 1 - b_n]."""
    t = time_grid(n)
    keep = (t >= bandwidth - _T_EPS) & (t <= 1.0 - bandwidth + _T_EPS)
    return t[keep]


def _kernel_values(kind, u):
    """Evaluate the kernel on scaled offsets u = (t_i - t)/b, |u| <= 1."""
    u = np.minimum(np.abs(u), 1.0)
    if kind == "uniform":
        return np.full_like(u, 0.5)
    if kind == "epanechnikov":
        return 0.75 * (1.0 - u * u)
    if kind == "triangular":
        return 1.0 - u
    raise ConfigError(f"unknown kernel kind {kind!r}; expected one of {_KERNELS}")


@dataclass(frozen=True)
class Dataset:
    """Observed regression data on the grid t_i = i/n.

    Parameters
    ----------
    X : ndarray of shape (n, p)
        Design matrix, row i observed at time t_i = (i + 1)/n (0-based i).
    y : ndarray of shape (n,)
        Response vector.
    """

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2:
            raise DataError(f"X must be 2-d, got shape {X.shape}")
        if y.ndim != 1:
            raise DataError(f"y must be 1-d, got shape {y.shape}")
        if X.shape[0] != y.shape[0]:
            raise DataError(
                f"X has {X.shape[0]} rows but y has {y.shape[0]} entries"
            )
        if X.shape[0] < 2:
            raise DataError("need at least two observations")
        if X.shape[1] < 1:
            raise DataError("X must have at least one column")
        if not np.all(np.isfinite(X)):
            bad = np.argwhere(~np.isfinite(X))[0]
            raise DataError(
                f"X contains a non-finite value at row {bad[0]}, column {bad[1]}"
            )
        if not np.all(np.isfinite(y)):
            bad = int(np.argwhere(~np.isfinite(y))[0][0])
            raise DataError(f"y contains a non-finite value at row {bad}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def times(self):
        return time_grid(self.n)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and bandwidth for the localization weights.

    ``kind`` is one of ``"uniform"`` (K(u) = 0.5 on [-1, 1], the default),
    ``"epanechnikov"`` (K(u) = 0.75 (1 - u^2)) or ``"triangular"``
    (K(u) = 1 - |u|).  ``bandwidth`` must lie strictly between 0 and 1/2;
    compatibility with the sample size is checked when weights are built.
    """

    kind: str = "uniform"
    bandwidth: float = 0.1

    def __post_init__(self):
        if self.kind not in _KERNELS:
            raise ConfigError(
                f"unknown kernel kind {self.kind!r}; expected one of {_KERNELS}"
            )
        if not (0.0 < self.bandwidth < 0.5):
            raise ConfigError(
                f"bandwidth must lie in (0, 0.5), got {self.bandwidth}"
            )

    def interior(self):
        """Interior domain endpoints (b_n, 1 - b_n)."""
        return self.bandwidth, 1.0 - self.bandwidth


def kernel_weights(spec, t, n):
    """Neighborhood indices and normalized kernel weights at location t.

    Parameters
    ----------
    spec : KernelSpec
        Kernel family and bandwidth b_n.
    t : float
        Test location; must lie in the interior domain [b_n, 1 - b_n].
    n : int
        Total number of observations on the grid t_i = i/n.

    Returns
    -------
    indices : ndarray of int
        0-based positions i with |t_{i+1} - t| <= b_n, in increasing order.
    weights : ndarray of float
        Matching kernel weights, nonnegative and summing to one.

    Raises
    ------
    BoundaryError
        If t falls outside the interior domain.
    DegenerateBandwidthError
        If the bandwidth resolves to fewer than two grid points.
    """
    if n < 2:
        raise ConfigError(f"need n >= 2 observations, got {n}")
    b = spec.bandwidth
    if b <= 1.0 / n:
        raise DegenerateBandwidthError(
            f"bandwidth {b} does not exceed the grid spacing 1/{n}"
        )
    lo, hi = spec.interior()
    if t < lo - _T_EPS or t > hi + _T_EPS:
        raise BoundaryError(
            f"t={t} lies outside the interior domain [{lo}, {hi}]"
        )
    times = time_grid(n)
    mask = np.abs(times - t) <= b + _T_EPS
    indices = np.nonzero(mask)[0]
    if indices.size < 2 or n * b < 2.0:
        raise DegenerateBandwidthError(
            f"neighborhood at t={t} has {indices.size} points "
            f"(n*b_n = {n * b:.3g}); increase the bandwidth"
        )
    raw = _kernel_values(spec.kind, (times[indices] - t) / b)
    total = raw.sum()
    if total <= 0.0:
        raise DegenerateBandwidthError(
            f"kernel mass at t={t} is zero; increase the bandwidth"
        )
    return indices, raw / total


@dataclass(frozen=True)
class LocalDesign:
    """Weighted local regression problem at a single test location.

    Rows of ``Xt`` are sqrt(w(i, t)) * x_i over the neighborhood, ``Yt``
    the matching weighted responses.  After :func:`svd_projection` the thin
    SVD factors ``P`` (|N_t| x r), ``D`` (r,), ``Q`` (p x r) are populated
    and the projection onto the weighted row space is available factor-wise
    as Q (Q^T v), never as a materialized p x p matrix.
    """

    t: float
    indices: np.ndarray
    weights: np.ndarray
    Xt: np.ndarray
    Yt: np.ndarray
    n_total: int
    P: np.ndarray | None = None
    D: np.ndarray | None = None
    Q: np.ndarray | None = None
    rank: int | None = None

    @property
    def size(self):
        """Neighborhood size |N_t|."""
        return self.indices.size

    @property
    def p(self):
        return self.Xt.shape[1]

    @property
    def has_svd(self):
        return self.Q is not None

    def _require_svd(self):
        if not self.has_svd:
            raise ConfigError(
                "projection requested before svd_projection was applied"
            )

    def project(self, v):
        """Apply the row-space projection Q Q^T to a vector factor-wise."""
        self._require_svd()
        if self.rank == 0:
            return np.zeros_like(np.asarray(v, dtype=float))
        return self.Q @ (self.Q.T @ v)

    def projection_offdiag_max(self, chunk=256):
        """Row-wise max_{k != j} |(Q Q^T)_{jk}| without a p x p matrix.

        Works through row blocks of Q so memory stays O(chunk * p).
        Returns the zero vector when p == 1 (max over an empty set).
        """
        self._require_svd()
        p = self.p
        out = np.zeros(p)
        if self.rank == 0 or p == 1:
            return out
        Q = self.Q
        for start in range(0, p, chunk):
            stop = min(start + chunk, p)
            block = np.abs(Q[start:stop] @ Q.T)
            block[np.arange(stop - start), np.arange(start, stop)] = -1.0
            out[start:stop] = block.max(axis=1)
        return out

    def projection_matrix(self):
        """Dense p x p projection Q Q^T; intended for small-p checks."""
        self._require_svd()
        if self.rank == 0:
            return np.zeros((self.p, self.p))
        return self.Q @ self.Q.T


def build_local_design(data, indices, weights, t=None):
    """Assemble the weighted design 𝒳_t and response 𝒴_t.

    Row i of the output is sqrt(w(i, t)) x_i, so that
    |𝒴_t - 𝒳_t b|_2^2 equals the kernel-weighted squared error
    sum_i w(i, t) (y_i - x_i^T b)^2.
    """
    indices = np.asarray(indices)
    weights = np.asarray(weights, dtype=float)
    if indices.shape != weights.shape:
        raise ConfigError("indices and weights must have matching shapes")
    if indices.size == 0:
        raise DegenerateBandwidthError("empty neighborhood")
    if np.any(weights < 0):
        raise ConfigError("weights must be nonnegative")
    root = np.sqrt(weights)
    Xt = root[:, None] * data.X[indices]
    Yt = root * data.y[indices]
    if t is None:
        t = float(np.mean(data.times[indices]))
    return LocalDesign(
        t=float(t),
        indices=indices,
        weights=weights,
        Xt=Xt,
        Yt=Yt,
        n_total=data.n,
    )


def svd_projection(design, rank_tol=DEFAULT_RANK_TOL):
    """Thin SVD 𝒳_t = P D Q^T with rank truncation.

    Singular values at or below ``rank_tol`` times the largest one are
    treated as zero; the returned design carries only the leading ``rank``
    factors, so Q spans the numerical row space of 𝒳_t.
    """
    Pm, d, Qt = np.linalg.svd(design.Xt, full_matrices=False)
    if d.size and d[0] > 0.0:
        rank = int(np.sum(d > rank_tol * d[0]))
    else:
        rank = 0
    return dataclasses.replace(
        design,
        P=Pm[:, :rank],
        D=d[:rank],
        Q=Qt[:rank].T,
        rank=rank,
    )


@dataclass(frozen=True)
class RidgeCovariance:
    """Error covariance of the ridge estimator in factored form.

    ``factor`` is a p x r matrix M with Omega = M M^T, built through the
    SVD of the weighted design so no p x p inverse is ever formed.
    ``diag`` holds the p diagonal entries and ``minimum`` the smallest one.
    """

    factor: np.ndarray
    diag: np.ndarray
    minimum: float

    @property
    def p(self):
        return self.factor.shape[0]

    def dense(self):
        """Materialize Omega as a dense p x p matrix (small-p checks)."""
        return self.factor @ self.factor.T


def ridge_covariance(design, sigma_et, lambda2, psd_tol=1e-8):
    """Covariance Omega(lambda2) of the local ridge estimator.

    Computes

        Omega = (𝒳^T 𝒳 + lambda2 I)^{-1} 𝒳^T W^{1/2} Sigma_e W^{1/2} 𝒳
                (𝒳^T 𝒳 + lambda2 I)^{-1}

    through the thin SVD 𝒳 = P D Q^T: with g = d / (d^2 + lambda2) the
    factored form is Omega = Q S Q^T, S = diag(g) P^T W^{1/2} Sigma_e
    W^{1/2} P diag(g), and the returned factor is M = Q E with S = E E^T.

    Parameters
    ----------
    design : LocalDesign
        Must carry SVD factors (see :func:`svd_projection`).
    sigma_et : ndarray of shape (|N_t|, |N_t|)
        Error covariance restricted to the neighborhood.  A non-PSD input
        (beyond ``psd_tol``) triggers a warning, not an exception.
    lambda2 : float
        Ridge penalty, must be positive.

    Raises
    ------
    NumericalError
        If the inner factor is indefinite beyond tolerance, which cannot
        happen for a PSD ``sigma_et``.
    """
    design._require_svd()
    if lambda2 <= 0.0:
        raise ConfigError(f"lambda2 must be positive, got {lambda2}")
    m = design.size
    sigma_et = np.asarray(sigma_et, dtype=float)
    if sigma_et.shape != (m, m):
        raise ConfigError(
            f"sigma_et must have shape ({m}, {m}), got {sigma_et.shape}"
        )
    scale = float(np.max(np.abs(sigma_et))) if sigma_et.size else 0.0
    if scale > 0.0:
        if np.max(np.abs(sigma_et - sigma_et.T)) > psd_tol * scale:
            warnings.warn(
                "sigma_et is not symmetric; results use (S + S^T)/2",
                stacklevel=2,
            )
        sym = 0.5 * (sigma_et + sigma_et.T)
        if np.linalg.eigvalsh(sym)[0] < -psd_tol * scale:
            warnings.warn(
                "sigma_et is not positive semidefinite beyond tolerance",
                stacklevel=2,
            )
        sigma_et = sym
    p = design.p
    r = design.rank
    if r == 0 or scale == 0.0:
        factor = np.zeros((p, 0))
        diag = np.zeros(p)
        return RidgeCovariance(factor=factor, diag=diag, minimum=0.0)
    root_w = np.sqrt(design.weights)
    WP = root_w[:, None] * design.P
    g = design.D / (design.D**2 + lambda2)
    inner = WP.T @ sigma_et @ WP
    S = g[:, None] * inner * g[None, :]
    S = 0.5 * (S + S.T)
    eigval, eigvec = np.linalg.eigh(S)
    top = eigval[-1] if eigval.size else 0.0
    if top > 0.0 and eigval[0] < -1e-10 * top:
        raise NumericalError(
            "ridge covariance factor is indefinite beyond tolerance; "
            "check sigma_et"
        )
    eigval = np.clip(eigval, 0.0, None)
    # Canonical eigenvector signs: the largest-magnitude entry is made
    # positive.  LAPACK's sign choice can flip under last-bit input
    # changes (e.g. rescaling sigma_et), and the factor feeds shared
    # Monte-Carlo draws, so realized inference must not depend on it.
    lead = np.abs(eigvec).argmax(axis=0)
    flip = eigvec[lead, np.arange(eigvec.shape[1])] < 0.0
    eigvec[:, flip] *= -1.0
    factor = design.Q @ (eigvec * np.sqrt(eigval))
    diag = np.einsum("ij,ij->i", factor, factor)
    return RidgeCovariance(factor=factor, diag=diag, minimum=float(diag.min()))
