"""Pointwise inference for high-dimensional time-varying coefficient models.

Kernel-localized lasso and ridge estimation with explicit bias correction,
Monte-Carlo FWER-controlled p-values, dependence-aware error covariance,
a simulation harness, and a dynamic-graph learner built on nodewise
regressions.

Typical use::

    from tvinfer import Dataset, KernelSpec, infer_path

    result = infer_path(Dataset(X=X, y=y), spec=KernelSpec("uniform", 0.1))
    for fit in result.fits:
        print(fit.t, fit.rejected)
"""

from .errors import (
    BoundaryError,
    ConfigError,
    ConvergenceError,
    DataError,
    DegenerateBandwidthError,
    DegenerateVarianceError,
    NumericalError,
    TVInferError,
)
from .errorcov import (
    ErrorCovModel,
    band_covariance,
    build_sigma_et,
    residual_autocovariance,
    select_band_width,
)
from .estimator import PointEstimate, bias_correct, tv_ridge
from .graph import DynamicGraph, graph_diff, learn_graph
from .inference import (
    InferenceConfig,
    NullDistribution,
    PathResult,
    PointwiseFit,
    adjust_pvalues,
    estimate_null_distribution,
    infer_path,
    pooled_residuals,
    raw_pvalues,
    test_pointwise,
)
from .lasso import (
    LassoConfig,
    PenaltyRegime,
    cross_validate_lambda1,
    kkt_residual,
    lasso_objective,
    recommend_lambda,
    scaled_lasso_sigma,
    weighted_lasso,
)
from .localdesign import (
    Dataset,
    KernelSpec,
    LocalDesign,
    RidgeCovariance,
    build_local_design,
    interior_grid,
    kernel_weights,
    ridge_covariance,
    svd_projection,
    time_grid,
)
from .simulate import (
    MethodMetrics,
    SimulationConfig,
    SimulationReport,
    gen_coefficients,
    gen_design,
    gen_errors,
    lrd_tail_ratio,
    run_simulation,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryError",
    "ConfigError",
    "ConvergenceError",
    "DataError",
    "Dataset",
    "DegenerateBandwidthError",
    "DegenerateVarianceError",
    "DynamicGraph",
    "ErrorCovModel",
    "InferenceConfig",
    "KernelSpec",
    "LassoConfig",
    "LocalDesign",
    "MethodMetrics",
    "NullDistribution",
    "NumericalError",
    "PathResult",
    "PenaltyRegime",
    "PointEstimate",
    "PointwiseFit",
    "RidgeCovariance",
    "SimulationConfig",
    "SimulationReport",
    "TVInferError",
    "adjust_pvalues",
    "band_covariance",
    "bias_correct",
    "build_local_design",
    "build_sigma_et",
    "cross_validate_lambda1",
    "estimate_null_distribution",
    "gen_coefficients",
    "gen_design",
    "gen_errors",
    "graph_diff",
    "infer_path",
    "interior_grid",
    "kernel_weights",
    "kkt_residual",
    "lasso_objective",
    "learn_graph",
    "lrd_tail_ratio",
    "pooled_residuals",
    "raw_pvalues",
    "recommend_lambda",
    "ridge_covariance",
    "run_simulation",
    "scaled_lasso_sigma",
    "select_band_width",
    "svd_projection",
    "test_pointwise",
    "time_grid",
    "tv_ridge",
    "__version__",
]
