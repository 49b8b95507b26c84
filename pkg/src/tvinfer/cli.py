"""Command-line interface.

Four subcommands: ``infer`` (pointwise estimates and p-values along a time
grid, long-format CSV), ``simulate`` (Monte-Carlo protocol, metrics table),
``graph`` (dynamic conditional-dependence graph from multivariate series),
and ``nulldist`` (sorted Monte-Carlo null sample for diagnostics).

Configuration is a flat JSON object; every command-line flag overrides the
corresponding file value.  Unknown config keys are rejected before any
compute.  Outputs use shortest round-trip float formatting and contain no
timing information, so fixed-seed runs are byte-identical regardless of
thread count.

Input data are headered CSVs with design columns x1..xp (and response
column y where a response is required), rows in time order so t_i = i/n.

Exit codes: 0 success, 2 configuration or validation error, 3 data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError, TVInferError
from .errorcov import ErrorCovModel
from .graph import learn_graph
from .inference import InferenceConfig, infer_path, test_pointwise
from .lasso import LassoConfig, PenaltyRegime
from .localdesign import Dataset, KernelSpec
from .simulate import SimulationConfig, report_csv, report_text, run_simulation

__all__ = ["main"]

logger = logging.getLogger(__name__)

_COMMON_KEYS = {
    "seed", "threads", "alpha", "bandwidth", "lambda2", "xi", "zeta",
    "nmc", "kernel", "error_model", "out",
}
_MODEL_KEYS = {
    "sigma", "h", "band_rho", "regime", "a_l1", "rho", "q", "C", "C_q",
    "lambda1",
}
_ALLOWED = {
    "infer": _COMMON_KEYS | _MODEL_KEYS | {"data", "grid"},
    "nulldist": _COMMON_KEYS | _MODEL_KEYS | {"data", "t"},
    "graph": _COMMON_KEYS | _MODEL_KEYS | {"data", "rule"},
    "simulate": _COMMON_KEYS
    | {
        "n", "p", "s", "design", "design_rho", "error", "error_param",
        "n_knots", "M", "methods", "band_rho", "lrd_m_max",
        "fp_calib_reps",
    },
}

_DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "alpha": 0.05,
    "bandwidth": 0.1,
    "lambda2": None,
    "xi": 0.05,
    "zeta": 0.0,
    "nmc": 50_000,
    "kernel": "uniform",
    "error_model": "iid",
    "rule": "or",
    "t": 0.5,
    "regime": "iid",
}


def _add_common(sp, with_data):
    sp.add_argument("--config", type=Path, help="JSON config file")
    sp.add_argument("--seed", type=int, help="master RNG seed (64-bit)")
    sp.add_argument("--threads", type=int, help="worker pool size")
    sp.add_argument("--alpha", type=float, help="FWER level")
    sp.add_argument("--bandwidth", type=float, help="kernel bandwidth b_n")
    sp.add_argument("--lambda2", type=float, help="ridge penalty (default 1/n)")
    sp.add_argument("--xi", type=float, help="projection-correction exponent")
    sp.add_argument("--zeta", type=float, help="p-value adjustment offset")
    sp.add_argument("--nmc", type=int, help="Monte-Carlo null sample size")
    sp.add_argument(
        "--kernel", choices=("uniform", "epanechnikov", "triangular"),
        help="kernel shape",
    )
    sp.add_argument(
        "--error-model", dest="error_model",
        help="error covariance: iid, iid_known, banded (infer/graph/"
        "nulldist) or auto/iid/banded (simulate)",
    )
    sp.add_argument("--out", type=Path, help="output directory")
    sp.add_argument(
        "-v", "--verbose", action="count", default=0,
        help="-v for progress, -vv for debug",
    )
    if with_data:
        sp.add_argument("--data", type=Path, help="input CSV path")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="tvinfer",
        description="Pointwise inference for time-varying coefficient models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("infer", help="estimates and p-values along a grid")
    _add_common(sp, with_data=True)

    sp = sub.add_parser("simulate", help="Monte-Carlo protocol metrics")
    _add_common(sp, with_data=False)

    sp = sub.add_parser("graph", help="dynamic graph from multivariate series")
    _add_common(sp, with_data=True)
    sp.add_argument("--rule", choices=("or", "and"), help="edge symmetrization")

    sp = sub.add_parser("nulldist", help="sorted min-p null sample at one t")
    _add_common(sp, with_data=True)
    sp.add_argument("--t", type=float, help="time point in [b_n, 1-b_n]")

    return parser


def _load_json(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return obj


def _merge_config(args):
    """File values, overridden by flags, validated against the key set."""
    allowed = _ALLOWED[args.command]
    cfg = {}
    if args.config is not None:
        cfg = _load_json(args.config)
        unknown = sorted(set(cfg) - allowed)
        if unknown:
            raise ConfigError(
                f"unknown config keys for {args.command}: {', '.join(unknown)}"
            )
    for key in allowed:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    if "data" in allowed and "data" not in cfg:
        raise ConfigError("no input data: pass --data or set it in the config")
    return cfg


def _get(cfg, key):
    return cfg.get(key, _DEFAULTS.get(key))


def _read_frame(path):
    try:
        df = pd.read_csv(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"malformed CSV {path}: {exc}") from exc
    return df


def _numeric_columns(df, cols, path):
    """Column arrays, with row/column diagnostics for bad cells."""
    out = {}
    for col in cols:
        values = pd.to_numeric(df[col], errors="coerce").to_numpy(float)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            # +2: header line plus 1-based numbering
            raise DataError(
                f"{path}: non-numeric or non-finite value in column "
                f"{col!r}, line {bad[0] + 2}"
            )
        out[col] = values
    return out


def _x_columns(df, path):
    xcols = [c for c in df.columns if c != "y"]
    expected = [f"x{j}" for j in range(1, len(xcols) + 1)]
    if xcols != expected:
        raise DataError(
            f"{path}: design columns must be x1..x{len(xcols)} in order, "
            f"got {xcols[:8]}{'...' if len(xcols) > 8 else ''}"
        )
    return xcols


def _read_dataset(path):
    df = _read_frame(path)
    if "y" not in df.columns:
        raise DataError(f"{path}: missing response column 'y'")
    xcols = _x_columns(df, path)
    cols = _numeric_columns(df, xcols + ["y"], path)
    X = np.column_stack([cols[c] for c in xcols])
    return Dataset(X=X, y=cols["y"])


def _read_nodes(path):
    df = _read_frame(path)
    if "y" in df.columns:
        raise DataError(
            f"{path}: graph input must contain node columns x1..xd only"
        )
    xcols = _x_columns(df, path)
    cols = _numeric_columns(df, xcols, path)
    return np.column_stack([cols[c] for c in xcols])


def _err_model(cfg):
    name = _get(cfg, "error_model")
    if name == "iid":
        return ErrorCovModel.iid_estimated()
    if name == "iid_known":
        if "sigma" not in cfg:
            raise ConfigError("error_model iid_known needs a 'sigma' key")
        return ErrorCovModel.iid_known(float(cfg["sigma"]))
    if name == "banded":
        h = cfg.get("h")
        return ErrorCovModel.banded(
            h=int(h) if h is not None else None,
            rho=float(cfg.get("band_rho", 1.5)),
        )
    raise ConfigError(
        f"error_model must be iid, iid_known or banded, got {name!r}"
    )


def _regime(cfg):
    name = _get(cfg, "regime")
    if name == "iid":
        return PenaltyRegime.iid()
    if name == "srd":
        if "a_l1" not in cfg:
            raise ConfigError("regime srd needs 'a_l1' (l1 norm of the MA coefficients)")
        return PenaltyRegime.srd(float(cfg["a_l1"]))
    if name == "lrd":
        if "rho" not in cfg:
            raise ConfigError("regime lrd needs 'rho' in (1/2, 1)")
        return PenaltyRegime.lrd(float(cfg["rho"]), C=float(cfg.get("C", 1.0)))
    if name == "heavy":
        if "q" not in cfg:
            raise ConfigError("regime heavy needs 'q' > 2")
        return PenaltyRegime.heavy_tail(
            float(cfg["q"]), C_q=float(cfg.get("C_q", 2.0))
        )
    raise ConfigError(
        f"regime must be iid, srd, lrd or heavy, got {name!r}"
    )


def _inference_config(cfg):
    return InferenceConfig(
        alpha=float(_get(cfg, "alpha")),
        xi=float(_get(cfg, "xi")),
        zeta=float(_get(cfg, "zeta")),
        n_mc=int(_get(cfg, "nmc")),
        seed=int(_get(cfg, "seed")),
    )


def _kernel_spec(cfg):
    return KernelSpec(
        kind=_get(cfg, "kernel"), bandwidth=float(_get(cfg, "bandwidth"))
    )


def _lasso_config(cfg):
    lam = cfg.get("lambda1")
    return LassoConfig(lambda1=float(lam) if lam is not None else None)


def _out_dir(cfg):
    out = _get(cfg, "out")
    if out is None:
        raise ConfigError("no output directory: pass --out or set it in the config")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt(v):
    return repr(float(v))


def _lambda2(cfg):
    lam = _get(cfg, "lambda2")
    return float(lam) if lam is not None else None


def _cmd_infer(cfg):
    data = _read_dataset(cfg["data"])
    grid = cfg.get("grid")
    if grid is not None:
        grid = np.asarray(grid, dtype=float)
    result = infer_path(
        data,
        grid=grid,
        spec=_kernel_spec(cfg),
        lasso_cfg=_lasso_config(cfg),
        lambda2=_lambda2(cfg),
        err_model=_err_model(cfg),
        inf_cfg=_inference_config(cfg),
        regime=_regime(cfg),
        n_jobs=int(_get(cfg, "threads")),
    )
    if not any(f is not None for f in result.fits):
        raise result.failures[0][2]
    for _, t, err in result.failures:
        print(f"warning: t={t:g} failed: {err}", file=sys.stderr)
    out = _out_dir(cfg)
    lines = ["t,j,beta_hat,raw_p,adj_p,rejected"]
    for g, fit in enumerate(result.fits):
        if fit is None:
            continue
        t = result.grid[g]
        mask = np.zeros(data.p, dtype=bool)
        mask[fit.rejected] = True
        for j in range(data.p):
            lines.append(
                f"{_fmt(t)},{j + 1},{_fmt(fit.estimate.beta_hat[j])},"
                f"{_fmt(fit.raw_p[j])},{_fmt(fit.adj_p[j])},"
                f"{int(mask[j])}"
            )
    path = out / "estimates.csv"
    path.write_text("\n".join(lines) + "\n")
    print(f"wrote {path}")
    return 0


def _cmd_simulate(cfg):
    sim = SimulationConfig(
        n=int(cfg.get("n", 200)),
        p=int(cfg.get("p", 100)),
        s=int(cfg.get("s", 3)),
        design=cfg.get("design", "identity"),
        design_rho=float(cfg.get("design_rho", 0.5)),
        error=cfg.get("error", "iid_normal"),
        error_param=float(cfg.get("error_param", 0.0)),
        n_knots=int(cfg.get("n_knots", 6)),
        kernel=_get(cfg, "kernel"),
        bandwidth=float(_get(cfg, "bandwidth")),
        M=int(cfg.get("M", 100)),
        alpha=float(_get(cfg, "alpha")),
        seed=int(_get(cfg, "seed")),
        methods=tuple(cfg.get("methods", ("proposed",))),
        lambda2=_lambda2(cfg),
        xi=float(_get(cfg, "xi")),
        zeta=float(_get(cfg, "zeta")),
        n_mc=int(cfg.get("nmc", 2000)),
        error_cov=cfg.get("error_model", "auto"),
        band_rho=float(cfg["band_rho"]) if "band_rho" in cfg else None,
        lrd_m_max=int(cfg.get("lrd_m_max", 100_000)),
        fp_calib_reps=int(cfg.get("fp_calib_reps", 100)),
        n_jobs=int(_get(cfg, "threads")),
    )
    report = run_simulation(sim)
    out = _out_dir(cfg)
    (out / "metrics.csv").write_text(report_csv(report))
    (out / "metrics.txt").write_text(report_text(report))
    sys.stdout.write(report_text(report))
    print(f"runtime: {report.runtime_s:.1f}s", file=sys.stderr)
    print(f"wrote {out / 'metrics.csv'}")
    return 0


def _cmd_graph(cfg):
    Y = _read_nodes(cfg["data"])
    graph = learn_graph(
        Y,
        spec=_kernel_spec(cfg),
        lasso_cfg=_lasso_config(cfg),
        lambda2=_lambda2(cfg),
        err_model=_err_model(cfg),
        inf_cfg=_inference_config(cfg),
        regime=_regime(cfg),
        rule=_get(cfg, "rule"),
        n_jobs=int(_get(cfg, "threads")),
    )
    for k, t, err in graph.failures:
        print(f"warning: node {k + 1} at t={t:g} failed: {err}", file=sys.stderr)
    out = _out_dir(cfg)
    lines = ["t,i,j,edge_p,present"]
    d = graph.d
    for g, t in enumerate(graph.grid):
        for i in range(d):
            for j in range(i + 1, d):
                lines.append(
                    f"{_fmt(t)},{i + 1},{j + 1},"
                    f"{_fmt(graph.edge_p[g, i, j])},"
                    f"{int(graph.adjacency[g, i, j])}"
                )
    (out / "edges.csv").write_text("\n".join(lines) + "\n")
    lines = ["t,src,dst,adj_p"]
    for g, t in enumerate(graph.grid):
        for k in range(d):
            for l in range(d):
                if k != l:
                    lines.append(
                        f"{_fmt(t)},{k + 1},{l + 1},"
                        f"{_fmt(graph.directed_p[g, k, l])}"
                    )
    (out / "directed.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out / 'edges.csv'} and {out / 'directed.csv'}")
    return 0


def _cmd_nulldist(cfg):
    data = _read_dataset(cfg["data"])
    t = float(_get(cfg, "t"))
    fit = test_pointwise(
        data,
        t,
        spec=_kernel_spec(cfg),
        lasso_cfg=_lasso_config(cfg),
        lambda2=_lambda2(cfg),
        err_model=_err_model(cfg),
        inf_cfg=_inference_config(cfg),
        regime=_regime(cfg),
        keep_null=True,
    )
    out = _out_dir(cfg)
    path = out / "nulldist.txt"
    path.write_text(
        "\n".join(_fmt(v) for v in fit.null.samples) + "\n"
    )
    print(f"wrote {path}")
    return 0


_COMMANDS = {
    "infer": _cmd_infer,
    "simulate": _cmd_simulate,
    "graph": _cmd_graph,
    "nulldist": _cmd_nulldist,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    level = (
        logging.DEBUG
        if args.verbose >= 2
        else logging.INFO
        if args.verbose == 1
        else logging.WARNING
    )
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        cfg = _merge_config(args)
        return _COMMANDS[args.command](cfg)
    except TVInferError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
