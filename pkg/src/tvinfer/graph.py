"""Dynamic graph learning by nodewise time-varying regressions.

Each node k of a d-variate series is regressed on the other d - 1 nodes
with the full localized inference pipeline; the FWER-adjusted p-value of
coefficient l in that regression is the evidence for a directed edge
k -> l at time t.  Directed decisions are symmetrized with an OR rule
(edge if either direction rejects; combined p-value is the smaller one)
or an AND rule (both must reject; combined p-value is the larger one).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .errorcov import ErrorCovModel
from .inference import InferenceConfig, _parallel_map, infer_path
from .lasso import LassoConfig, PenaltyRegime
from .localdesign import Dataset, KernelSpec

__all__ = ["DynamicGraph", "learn_graph", "graph_diff"]

_RULES = ("or", "and")


@dataclass
class DynamicGraph:
    """Estimated graph sequence on a time grid.

    ``directed_p[g, k, l]`` is the adjusted p-value for node l in the
    regression of node k at grid point g (NaN on the diagonal and where
    the regression failed).  ``adjacency`` and ``edge_p`` are the
    symmetrized decisions and p-values under ``rule``.
    """

    grid: np.ndarray
    rule: str
    alpha: float
    directed_p: np.ndarray
    adjacency: np.ndarray
    edge_p: np.ndarray
    failures: list = field(default_factory=list)

    @property
    def d(self):
        return self.adjacency.shape[1]

    def edges(self, g):
        """Sorted (i, j) pairs with i < j present at grid slot g."""
        a = self.adjacency[g]
        ii, jj = np.nonzero(np.triu(a, k=1))
        return list(zip(ii.tolist(), jj.tolist()))

    def edge_counts(self):
        """Number of edges at each grid point."""
        return np.array(
            [int(np.triu(a, k=1).sum()) for a in self.adjacency]
        )


def _symmetrize(directed_p, alpha, rule):
    reject = np.zeros(directed_p.shape, dtype=bool)
    valid = ~np.isnan(directed_p)
    reject[valid] = directed_p[valid] <= alpha
    swapped = np.swapaxes(reject, 1, 2)
    p_swapped = np.swapaxes(directed_p, 1, 2)
    if rule == "or":
        adjacency = reject | swapped
        edge_p = np.fmin(directed_p, p_swapped)
    else:
        adjacency = reject & swapped
        edge_p = np.maximum(directed_p, p_swapped)
    return adjacency, edge_p


def learn_graph(
    Y,
    grid=None,
    spec=None,
    lasso_cfg=None,
    lambda2=None,
    err_model=None,
    inf_cfg=None,
    regime=None,
    rule="or",
    n_jobs=1,
):
    """Learn a time-varying conditional dependence graph.

    Parameters
    ----------
    Y : array_like of shape (n, d)
        Observations of d nodes at times i/n; d must be at least 3 so
        each nodewise regression has two or more regressors.
    grid : array_like, optional
        Time points; defaults to every interior observation time.
    rule : {"or", "and"}
        Symmetrization of the directed decisions.

    Other keyword arguments configure the nodewise regressions exactly as
    in :func:`tvinfer.inference.infer_path`.

    Returns
    -------
    DynamicGraph

    Notes
    -----
    A regression that fails at a grid point leaves NaN in that row of
    ``directed_p`` and contributes no rejection there; failures are kept
    as (node, t, error) triples.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise DataError(f"Y must be 2-D, got shape {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise DataError("Y contains non-finite values")
    n, d = Y.shape
    if d < 3:
        raise ConfigError(
            f"graph learning needs at least 3 nodes, got {d}"
        )
    if rule not in _RULES:
        raise ConfigError(f"rule must be one of {_RULES}, got {rule!r}")
    spec = spec if spec is not None else KernelSpec()
    lasso_cfg = lasso_cfg if lasso_cfg is not None else LassoConfig()
    err_model = (
        err_model if err_model is not None else ErrorCovModel.iid_estimated()
    )
    inf_cfg = inf_cfg if inf_cfg is not None else InferenceConfig()
    regime = regime if regime is not None else PenaltyRegime.iid()

    def fit_node(k):
        data = Dataset(X=np.delete(Y, k, axis=1), y=Y[:, k])
        return infer_path(
            data,
            grid=grid,
            spec=spec,
            lasso_cfg=lasso_cfg,
            lambda2=lambda2,
            err_model=err_model,
            inf_cfg=inf_cfg,
            regime=regime,
            n_jobs=1,
        )

    results, hard_failures = _parallel_map(
        fit_node, list(range(d)), n_jobs, fail_fast=True,
        labels=list(range(d)),
    )
    if hard_failures:
        raise hard_failures[0][2]

    grid_times = results[0].grid
    G = grid_times.size
    directed_p = np.full((G, d, d), np.nan)
    failures = []
    for k, path in enumerate(results):
        other = np.delete(np.arange(d), k)
        for g, fit in enumerate(path.fits):
            if fit is not None:
                directed_p[g, k, other] = fit.adj_p
        failures.extend((k, t, err) for _, t, err in path.failures)

    adjacency, edge_p = _symmetrize(directed_p, inf_cfg.alpha, rule)
    return DynamicGraph(
        grid=grid_times,
        rule=rule,
        alpha=inf_cfg.alpha,
        directed_p=directed_p,
        adjacency=adjacency,
        edge_p=edge_p,
        failures=failures,
    )


def graph_diff(graph, g0, g1):
    """Edges gained and lost between two grid slots.

    Returns
    -------
    (added, removed) : pair of lists of (i, j) pairs, i < j
        Edges present at slot g1 but not g0, and vice versa.
    """
    before = set(graph.edges(g0))
    after = set(graph.edges(g1))
    return sorted(after - before), sorted(before - after)
