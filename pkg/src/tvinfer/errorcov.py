"""Dependence-aware error covariance for the local inference pipeline.

The stochastic term of the ridge estimator has covariance driven by the
error covariance restricted to the neighborhood N_t.  For dependent errors
this matrix is estimated by banding the Toeplitz matrix of pooled-residual
autocovariances

    sigma_hat_k = (1/n) sum_{i=1}^{n-k} r_i r_{i+k},

with band width h* = max(1, round((n'/log n')^(1/(2 rho)))) for
coefficient decay exponent rho, n' = |N_t|.  Banding can break positive
semidefiniteness; violations are repaired by shifting the diagonal up by
the most negative eigenvalue plus a small margin, and the repair is
logged.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .errors import ConfigError

__all__ = [
    "ErrorCovModel",
    "residual_autocovariance",
    "band_covariance",
    "select_band_width",
    "build_sigma_et",
]

logger = logging.getLogger(__name__)

_KINDS = ("iid_known", "iid_estimated", "known_matrix", "banded")


@dataclass(frozen=True)
class ErrorCovModel:
    """How the error covariance entering Omega is obtained.

    Use the constructors:

    - :meth:`iid_known`: independent errors with known standard deviation.
    - :meth:`iid_estimated`: independent errors, noise level estimated by
      the scaled lasso on the local design (the default model).
    - :meth:`known_matrix`: a full n x n covariance supplied by the caller,
      restricted to the neighborhood.
    - :meth:`banded`: banded Toeplitz estimate from pooled regression
      residuals; band width explicit or selected from the decay exponent.
    """

    kind: str
    sigma: float = 1.0
    matrix: np.ndarray | None = None
    h: int | None = None
    rho: float = 1.5

    @classmethod
    def iid_known(cls, sigma):
        if not sigma > 0:
            raise ConfigError(f"sigma must be positive, got {sigma}")
        return cls(kind="iid_known", sigma=float(sigma))

    @classmethod
    def iid_estimated(cls):
        return cls(kind="iid_estimated")

    @classmethod
    def known_matrix(cls, matrix):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ConfigError(
                f"covariance must be a square matrix, got shape {matrix.shape}"
            )
        return cls(kind="known_matrix", matrix=matrix)

    @classmethod
    def banded(cls, h=None, rho=1.5):
        if h is not None and h < 0:
            raise ConfigError(f"band width must be nonnegative, got {h}")
        if h is None and not rho > 0.5:
            raise ConfigError(
                f"automatic band width needs rho > 1/2, got {rho}"
            )
        return cls(kind="banded", h=h, rho=float(rho))


def residual_autocovariance(residuals, h):
    """Autocovariances sigma_hat_0..sigma_hat_h of a residual series.

    Uses the fixed divisor n (not n - k), matching the banding theory:
    sigma_hat_k = (1/n) sum_{i=1}^{n-k} r_i r_{i+k}.
    """
    r = np.asarray(residuals, dtype=float)
    if r.ndim != 1:
        raise ConfigError(f"residuals must be 1-d, got shape {r.shape}")
    n = r.size
    if not 0 <= h < n:
        raise ConfigError(f"need 0 <= h < n = {n}, got h = {h}")
    out = np.empty(h + 1)
    for k in range(h + 1):
        out[k] = r[: n - k] @ r[k:] / n
    return out


def band_covariance(sigma, h):
    """Banding operator B_h: zero out entries with |j - k| > h, then repair.

    If banding breaks positive semidefiniteness the diagonal is shifted up
    by |most negative eigenvalue| + 1e-8 and the repair is logged.

    Returns
    -------
    ndarray
        Symmetric PSD banded matrix.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ConfigError(f"sigma must be square, got shape {sigma.shape}")
    if h < 0:
        raise ConfigError(f"band width must be nonnegative, got {h}")
    m = sigma.shape[0]
    offsets = np.abs(np.arange(m)[:, None] - np.arange(m)[None, :])
    banded = np.where(offsets <= h, sigma, 0.0)
    banded = 0.5 * (banded + banded.T)
    if m:
        smallest = float(np.linalg.eigvalsh(banded)[0])
        if smallest < 0.0:
            shift = -smallest + 1e-8
            banded = banded + shift * np.eye(m)
            logger.warning(
                "banded covariance repaired: diagonal shifted by %.3g "
                "(most negative eigenvalue %.3g)", shift, smallest,
            )
    return banded


def select_band_width(n_local, rho):
    """Band width h* = max(1, round((n'/log n')^(1/(2 rho)))).

    ``n_local`` is the neighborhood size |N_t|; ``rho`` the coefficient
    decay exponent of the error process (must exceed 1/2).
    """
    if n_local < 3:
        raise ConfigError(f"need n_local >= 3, got {n_local}")
    if not rho > 0.5:
        raise ConfigError(f"need rho > 1/2, got {rho}")
    value = (n_local / np.log(n_local)) ** (1.0 / (2.0 * rho))
    return max(1, int(np.round(value)))


def build_sigma_et(model, design, residuals=None, sigma_hat=None, cache=None):
    """Error covariance restricted to the neighborhood of a local design.

    Parameters
    ----------
    model : ErrorCovModel
    design : LocalDesign
    residuals : ndarray of shape (n,), optional
        Pooled regression residuals r_i = y_i - x_i^T beta_tilde(t_i),
        required by the banded model.
    sigma_hat : float, optional
        Pre-computed scaled-lasso noise level for ``iid_estimated``;
        computed on the spot when omitted.
    cache : dict, optional
        Memo for the banded model, keyed by neighborhood size.  The banded
        matrix depends on the location only through |N_t|, so a path over
        many locations can reuse one matrix (and log its PSD repair once)
        instead of rebuilding it per location.

    Returns
    -------
    ndarray of shape (|N_t|, |N_t|)
        Symmetric PSD covariance (post-repair for the banded model).
    """
    m = design.size
    if model.kind == "iid_known":
        return model.sigma**2 * np.eye(m)
    if model.kind == "iid_estimated":
        if sigma_hat is None:
            from .lasso import scaled_lasso_sigma

            sigma_hat = scaled_lasso_sigma(design)
        if sigma_hat < 0:
            raise ConfigError(f"sigma_hat must be nonnegative, got {sigma_hat}")
        return sigma_hat**2 * np.eye(m)
    if model.kind == "known_matrix":
        full = model.matrix
        if full.shape[0] != design.n_total:
            raise ConfigError(
                f"known covariance is {full.shape[0]} x {full.shape[0]} but "
                f"the sample has n = {design.n_total}"
            )
        idx = design.indices
        return full[np.ix_(idx, idx)]
    if model.kind == "banded":
        if residuals is None:
            raise ConfigError(
                "banded error model needs pooled residuals; run it through "
                "the inference pipeline or pass residuals explicitly"
            )
        if cache is not None and m in cache:
            return cache[m]
        h = model.h if model.h is not None else select_band_width(m, model.rho)
        h = min(h, m - 1)
        coeffs = residual_autocovariance(residuals, h)
        first = np.zeros(m)
        first[: h + 1] = coeffs
        out = band_covariance(toeplitz(first), h)
        if cache is not None:
            cache[m] = out
        return out
    raise ConfigError(f"unknown error covariance kind {model.kind!r}")
