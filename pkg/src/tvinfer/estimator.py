"""Local ridge estimation and explicit bias correction.

The local ridge estimator has the closed form

    theta_tilde = Q diag(d_j / (d_j^2 + lambda2)) P^T 𝒴_t

through the thin SVD 𝒳_t = P D Q^T, an O(p r) computation.  Because the
ridge fit only sees the projection of the coefficient vector onto the
weighted row space R_t, its systematic shortfall against a sparse pilot
estimate beta_tilde is

    B_tilde = (P_{R_t} - I) beta_tilde,

and the corrected estimator beta_hat = theta_tilde - B_tilde satisfies the
exact identity beta_hat + (P_{R_t} - I) beta_tilde = theta_tilde.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

__all__ = ["PointEstimate", "tv_ridge", "bias_correct"]


@dataclass(frozen=True)
class PointEstimate:
    """Estimates at a single test location.

    ``beta_tilde`` is the sparse pilot (lasso), ``theta_tilde`` the ridge
    fit, ``bias`` the correction term (P_{R_t} - I) beta_tilde, and
    ``beta_hat = theta_tilde - bias`` the bias-corrected estimator the
    tests are built on.
    """

    t: float
    beta_tilde: np.ndarray
    theta_tilde: np.ndarray
    bias: np.ndarray
    beta_hat: np.ndarray


def tv_ridge(design, lambda2):
    """Ridge estimate through the SVD of the weighted design.

    Parameters
    ----------
    design : LocalDesign
        Must carry SVD factors (see :func:`~tvinfer.localdesign.svd_projection`).
    lambda2 : float
        Positive ridge penalty.

    Returns
    -------
    theta_tilde : ndarray of shape (p,)
    """
    design._require_svd()
    if lambda2 <= 0.0:
        raise ConfigError(f"lambda2 must be positive, got {lambda2}")
    if design.rank == 0:
        return np.zeros(design.p)
    shrink = design.D / (design.D**2 + lambda2)
    return design.Q @ (shrink * (design.P.T @ design.Yt))


def bias_correct(theta_tilde, beta_tilde, design):
    """Bias-corrected estimate beta_hat = theta_tilde - (P_{R_t} - I) beta_tilde.

    The projection is applied factor-wise (Q (Q^T v) - v), so cost is
    O(p r) and no p x p matrix is formed.
    """
    theta_tilde = np.asarray(theta_tilde, dtype=float)
    beta_tilde = np.asarray(beta_tilde, dtype=float)
    if theta_tilde.shape != beta_tilde.shape:
        raise ConfigError(
            "theta_tilde and beta_tilde must have matching shapes, got "
            f"{theta_tilde.shape} and {beta_tilde.shape}"
        )
    bias = design.project(beta_tilde) - beta_tilde
    beta_hat = theta_tilde - bias
    return PointEstimate(
        t=design.t,
        beta_tilde=beta_tilde,
        theta_tilde=theta_tilde,
        bias=bias,
        beta_hat=beta_hat,
    )
