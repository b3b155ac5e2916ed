"""Command-line interface.

Commands: simulate, fit, select, identify, forecast, similarity,
kl-compare.  A JSON config file may supply any long-option value; explicit
command-line flags override it.  Exit codes: 0 success, 2 configuration
error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import ewma_fit, ewma_select, nonfactor_map
from .densities import marginal_covariance
from .em_gaussian import FitConfig, fit
from .em_robust import fit_robust
from .em_st import fit_st
from .exceptions import ConfigError, DataError, InvalidParamsError, NumericError
from .forecast import forecast_roll
from .identify import IdentifyConfig, identify, similarity_matrix
from .io import (
    atomic_write_text,
    ingest,
    load_factor_model,
    new_report,
    read_matrix_csv,
    save_factor_model,
    write_matrix_csv,
    write_report,
    write_wide,
)
from .params import Regularization
from .selection import SplitPlan, default_bandwidth_grid, fit_dynamic_bandwidth, select_K
from .simulate import SimulationSpec, average_kl, simulate
from .weights import WeightScheme

FACTOR_MODELS = ("ghofm", "ghefm", "rhofm", "rhefm")
ALL_MODELS = FACTOR_MODELS + ("st-a", "st-b", "ewma", "nonfactor")
EWMA_ALPHA_GRID = [round(1.0 - 0.001 * i, 3) for i in range(51)]  # 1.000 .. 0.950


def _family(model: str) -> str:
    return "student_t" if model.startswith("r") else "gaussian"


def _homoscedastic(model: str) -> bool:
    return model in ("ghofm", "rhofm")


def _parse_k_candidates(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if ":" in part:
            lo, hi = part.split(":")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise ConfigError("empty candidate set for K")
    return sorted(set(out))


def _trim_outliers(obs: np.ndarray, k: float) -> np.ndarray:
    """Clamp each coordinate at +- k standard deviations (preprocessing)."""
    sd = np.std(obs.reshape(obs.shape[0], -1), axis=0).reshape(obs.shape[1:])
    lo, hi = -k * sd, k * sd
    return np.clip(obs, lo, hi)


def _fit_config(args, seed=None) -> FitConfig:
    return FitConfig(
        max_iter=args.max_iter, rel_tol=args.rel_tol,
        seed=args.seed if seed is None else seed,
        regularization=Regularization(mode=args.regularization),
        tv_sigma=getattr(args, "tv_sigma", False),
    )


def _resolve_grid(args, times) -> np.ndarray:
    if args.bandwidth is not None and args.bandwidth != "auto":
        return np.array([float(args.bandwidth)])
    return default_bandwidth_grid(times, args.grid_size)


def _load_data(args):
    times, obs, axes = ingest(args.data, args.layout, args.log_returns)
    if args.trim_k is not None:
        obs = _trim_outliers(obs, args.trim_k)
    return times, obs, axes


def _emit_correlation_plotdata(out_dir, params, times, n_pairs=6):
    """CSV of selected pairwise correlations of the marginal covariance."""
    grid = np.linspace(times[0], times[-1], 200)
    cov = marginal_covariance(grid, params)
    sd = np.sqrt(np.diagonal(cov, axis1=1, axis2=2))
    corr = cov / (sd[:, :, None] * sd[:, None, :])
    q = corr.shape[-1]
    pairs = [(i, j) for i in range(q) for j in range(i + 1, q)]
    # the most time-varying pairs are the interesting ones to plot
    spread = [float(np.ptp(corr[:, i, j])) for i, j in pairs]
    chosen = [pairs[i] for i in np.argsort(spread)[::-1][:n_pairs]]
    header = ["t"] + [f"corr_{i + 1}_{j + 1}" for i, j in chosen]
    body = np.column_stack([grid] + [corr[:, i, j] for i, j in chosen])
    write_matrix_csv(Path(out_dir) / "plotdata_correlations.csv", body, header)
    return "plotdata_correlations.csv"


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    spec = SimulationSpec(n_times=args.n, n_outputs=args.q, n_factors=args.k,
                          gamma=args.gamma, s2=args.s2, family=args.family,
                          nu=args.nu, seed=args.seed)
    times, obs, truth = simulate(spec)
    out = Path(args.out)
    write_wide(out / "data.csv", times, obs)
    write_matrix_csv(out / "truth_loading.csv", truth.loading)
    write_matrix_csv(out / "truth_sigma.csv", truth.sigma[None, :])
    k = spec.n_factors
    write_matrix_csv(out / "truth_lambdas.csv",
                     truth.lambdas.reshape(len(times), k * k),
                     header=[f"lam_{i + 1}_{j + 1}" for i in range(k)
                             for j in range(k)])
    report = new_report("simulate")
    report.update({
        "model": args.family, "seed": args.seed, "n_times": args.n,
        "n_outputs": args.q, "k_hat": args.k, "nu": args.nu,
        "files": ["data.csv", "truth_loading.csv", "truth_sigma.csv",
                  "truth_lambdas.csv"],
        "notes": [f"gamma={args.gamma}", f"s2={args.s2}"],
        "timings": {"total_seconds": time.perf_counter() - t0},
    })
    write_report(out / "report.json", report)
    return 0


def _fit_factor_model(args, times, obs, config):
    model = args.model
    family = _family(model)
    nu = args.nu if family == "student_t" else None
    h_hat = None
    report_extras = {}
    if _homoscedastic(model):
        scheme = WeightScheme.single()
        if family == "student_t":
            params, extras, rep = fit_robust(obs, times, scheme, args.k, config, nu)
        else:
            params, rep = fit(obs, times, scheme, args.k, config)
    else:
        grid = _resolve_grid(args, times)
        if getattr(args, "tv_sigma", False) and grid.size > 1:
            raise ConfigError(
                "time-varying sigma needs a fixed --bandwidth (grid "
                "selection is not defined for it)"
            )
        if grid.size == 1:
            scheme = WeightScheme.from_times(times, float(grid[0]))
            h_hat = float(grid[0])
            if family == "student_t":
                params, extras, rep = fit_robust(obs, times, scheme, args.k,
                                                 config, nu)
            else:
                params, rep = fit(obs, times, scheme, args.k, config)
        else:
            out = fit_dynamic_bandwidth(obs, times, args.k, grid, config,
                                        family, nu, args.refresh)
            params, rep, h_hat = out[0], out[1], out[2]
    return params, rep, h_hat, nu


def cmd_fit(args) -> int:
    t0 = time.perf_counter()
    times, obs, axes = _load_data(args)
    out = Path(args.out)
    report = new_report("fit")
    report.update({"model": args.model, "seed": args.seed,
                   "n_times": int(len(times))})
    config = _fit_config(args)

    if args.model in FACTOR_MODELS:
        if obs.ndim != 2:
            raise DataError("factor models need wide-layout data")
        if args.k is None:
            raise ConfigError("--k is required for factor models")
        params, rep, h_hat, nu = _fit_factor_model(args, times, obs, config)
        files = save_factor_model(out, params, {
            "model": args.model, "h_hat": h_hat, "nu": nu, "seed": args.seed,
        })
        files.append(_emit_correlation_plotdata(out, params, times))
        report.update({
            "n_outputs": int(obs.shape[1]), "k_hat": args.k, "h_hat": h_hat,
            "nu": nu, "trace": [float(v) for v in rep.trace],
            "bandwidth_trace": [float(v) for v in rep.bandwidth_trace],
            "iterations": rep.iterations, "converged": rep.converged,
            "files": files,
        })
    elif args.model in ("st-a", "st-b"):
        if obs.ndim != 3:
            raise DataError("spatiotemporal models need long-layout data")
        if args.k is None or args.k_space is None:
            raise ConfigError("--k and --k-space are required for st models")
        span = float(times[-1] - times[0])
        h0 = (float(args.bandwidth) if args.bandwidth not in (None, "auto")
              else span / 8.0)
        scheme = WeightScheme.from_times(times, h0)
        variant = "a" if args.model == "st-a" else "b"
        kwargs = (dict(scheme_joint=scheme) if variant == "a"
                  else dict(scheme_out=scheme,
                            scheme_space=WeightScheme.from_times(times, h0)))
        params, rep = fit_st(obs, times, (args.k, args.k_space), config,
                             variant, **kwargs)
        files = []
        write_matrix_csv(out / "B.csv", params.loading_out)
        write_matrix_csv(out / "C.csv", params.loading_space)
        write_matrix_csv(out / "Sigma.csv", params.sigma[None, :])
        write_matrix_csv(out / "Phi.csv", params.phi[None, :])
        files += ["B.csv", "C.csv", "Sigma.csv", "Phi.csv"]
        basis_sets = ([("lambda", params.basis_joint)] if variant == "a"
                      else [("lambda", params.basis_out),
                            ("gamma", params.basis_space)])
        for prefix, basis in basis_sets:
            for d in range(basis.n_bases):
                name = f"{prefix}_{d + 1}.csv"
                write_matrix_csv(out / name, basis.mats[d])
                files.append(name)
        report.update({
            "n_outputs": int(obs.shape[1]), "n_space": int(obs.shape[2]),
            "k_hat": args.k, "h_hat": h0,
            "trace": [float(v) for v in rep.trace],
            "iterations": rep.iterations, "converged": rep.converged,
            "files": files,
        })
    elif args.model == "ewma":
        if obs.ndim != 2:
            raise DataError("the EWMA baseline needs wide-layout data")
        if args.alpha is None or args.k is None:
            k_grid = ([args.k] if args.k is not None
                      else list(range(1, min(obs.shape) + 1)))
            alphas = [args.alpha] if args.alpha is not None else EWMA_ALPHA_GRID
            k_hat, alpha_hat, model = ewma_select(obs, times, k_grid, alphas)
        else:
            k_hat, alpha_hat = args.k, args.alpha
            model = ewma_fit(obs, times, k_hat, alpha_hat)
        write_matrix_csv(out / "B.csv", model.loadings)
        write_matrix_csv(out / "Sigma.csv", model.sigma[None, :])
        write_matrix_csv(out / "scores.csv", model.scores)
        report.update({
            "n_outputs": int(obs.shape[1]), "k_hat": int(k_hat),
            "alpha_hat": float(alpha_hat),
            "files": ["B.csv", "Sigma.csv", "scores.csv"],
        })
    elif args.model == "nonfactor":
        if obs.ndim != 2:
            raise DataError("the non-factor model needs wide-layout data")
        span = float(times[-1] - times[0])
        h0 = (float(args.bandwidth) if args.bandwidth not in (None, "auto")
              else span / 8.0)
        scheme = WeightScheme.from_times(times, h0)
        basis = nonfactor_map(obs, times, scheme)
        files = []
        for d in range(basis.n_bases):
            name = f"lambda_{d + 1}.csv"
            write_matrix_csv(out / name, basis.mats[d])
            files.append(name)
        report.update({
            "n_outputs": int(obs.shape[1]), "h_hat": h0, "files": files,
        })
    else:
        raise ConfigError(f"unknown model {args.model!r}")
    report["timings"] = {"total_seconds": time.perf_counter() - t0}
    write_report(out / "report.json", report)
    return 0


def cmd_select(args) -> int:
    t0 = time.perf_counter()
    times, obs, _ = _load_data(args)
    if obs.ndim != 2:
        raise DataError("selection runs on wide-layout data")
    if args.model not in FACTOR_MODELS:
        raise ConfigError("selection supports the factor models only")
    candidates = _parse_k_candidates(args.k_candidates)
    plan = SplitPlan(mode=args.split_mode, ratio=args.ratio,
                     count=args.splits, seed=args.seed)
    config = _fit_config(args)
    family = _family(args.model)
    nu = args.nu if family == "student_t" else None
    grid = _resolve_grid(args, times)
    result = select_K(obs, times, candidates, plan, config, family, nu,
                      bandwidth_grid=grid,
                      homoscedastic=_homoscedastic(args.model),
                      refresh=args.refresh, n_jobs=args.jobs)
    out = Path(args.out)
    files = []
    if result.params is not None:
        files = save_factor_model(out, result.params, {
            "model": args.model, "h_hat": result.h_hat, "nu": nu,
            "seed": args.seed,
        })
        files.append(_emit_correlation_plotdata(out, result.params, times))
    report = new_report("select")
    report.update({
        "model": args.model, "seed": args.seed, "n_times": int(len(times)),
        "n_outputs": int(obs.shape[1]), "k_hat": result.k_hat,
        "h_hat": result.h_hat, "nu": nu,
        "k_candidates": candidates,
        "v_table": {str(k): v for k, v in result.v_table.items()},
        "per_split": {str(k): v for k, v in result.per_split.items()},
        "failures": result.failures,
        "trace": ([float(v) for v in result.fit_report.trace]
                  if result.fit_report else []),
        "iterations": (result.fit_report.iterations
                       if result.fit_report else None),
        "converged": (result.fit_report.converged
                      if result.fit_report else None),
        "files": files,
        "timings": {"total_seconds": time.perf_counter() - t0},
    })
    write_report(out / "report.json", report)
    return 0


def cmd_identify(args) -> int:
    t0 = time.perf_counter()
    params, meta = load_factor_model(args.model_dir)
    config = IdentifyConfig(step_size=args.step_size, max_steps=args.max_steps,
                            check_every=args.check_every)
    rotated, a_mat, trace = identify(params, config)
    out = Path(args.out)
    files = save_factor_model(out, rotated, dict(meta, identified=True))
    write_matrix_csv(out / "rotation.csv", a_mat)
    files.append("rotation.csv")
    write_matrix_csv(out / "similarity.csv", similarity_matrix(rotated.loading))
    files.append("similarity.csv")
    report = new_report("identify")
    report.update({
        "model": str(meta.get("model")), "seed": meta.get("seed"),
        "k_hat": rotated.n_factors, "n_outputs": rotated.n_outputs,
        "trace": [float(v) for _, v in trace],
        "files": files,
        "timings": {"total_seconds": time.perf_counter() - t0},
    })
    write_report(out / "report.json", report)
    return 0


def cmd_similarity(args) -> int:
    params, _ = load_factor_model(args.model_dir)
    out = Path(args.out)
    write_matrix_csv(out / "similarity.csv", similarity_matrix(params.loading))
    report = new_report("similarity")
    report.update({"n_outputs": params.n_outputs, "files": ["similarity.csv"],
                   "timings": {"total_seconds": 0.0}})
    write_report(out / "report.json", report)
    return 0


def cmd_forecast(args) -> int:
    t0 = time.perf_counter()
    times, obs, _ = _load_data(args)
    if obs.ndim != 2:
        raise DataError("forecasting runs on wide-layout data")
    if args.train_count is None or not 2 <= args.train_count < len(times):
        raise ConfigError("--train-count must leave a nonempty test range")
    if args.model not in FACTOR_MODELS + ("ewma",):
        raise ConfigError("forecasting supports factor models and ewma")
    out = Path(args.out)
    train_t, train_y = times[: args.train_count], obs[: args.train_count]
    report = new_report("forecast")

    if args.model == "ewma":
        k_grid = ([args.k] if args.k is not None
                  else list(range(1, min(train_y.shape) + 1)))
        alphas = [args.alpha] if args.alpha is not None else EWMA_ALPHA_GRID
        k_hat, alpha_hat, model = ewma_select(train_y, train_t, k_grid, alphas)
        scores = []
        window = train_y.copy()
        for idx in range(args.train_count, len(times)):
            pos = float(model.n_points + 1)
            scores.append(float(model.logpdf(obs[idx], pos)[0]))
            window = np.vstack([window[1:], obs[idx]])
            model = ewma_fit(window, times[idx - len(window) + 1: idx + 1],
                             k_hat, alpha_hat)
        step_scores = np.array(scores)
        report.update({"k_hat": int(k_hat), "alpha_hat": float(alpha_hat)})
    else:
        if args.k is None:
            raise ConfigError("--k is required for factor-model forecasting")
        config = _fit_config(args)
        params, rep, h_hat, nu = _fit_factor_model(args, train_t, train_y, config)
        if _homoscedastic(args.model):
            raise ConfigError("rolling forecasts need the heteroscedastic "
                              "models (one basis per training time)")
        result = forecast_roll(obs, times, args.train_count, params,
                               _family(args.model), nu,
                               FitConfig(max_iter=args.roll_iter,
                                         rel_tol=args.rel_tol,
                                         seed=args.seed),
                               seed=args.seed)
        step_scores = result.step_scores
        report.update({"k_hat": args.k, "h_hat": h_hat, "nu": nu})

    body = np.column_stack([
        times[args.train_count:], step_scores, np.cumsum(step_scores),
    ])
    write_matrix_csv(out / "forecast_scores.csv", body,
                     header=["t", "log_likelihood", "cumulative"])
    report.update({
        "model": args.model, "seed": args.seed,
        "n_times": int(len(times)), "n_outputs": int(obs.shape[1]),
        "scores": {"total": float(np.sum(step_scores)),
                   "steps": int(step_scores.size)},
        "files": ["forecast_scores.csv"],
        "timings": {"total_seconds": time.perf_counter() - t0},
    })
    write_report(out / "report.json", report)
    return 0


def cmd_kl_compare(args) -> int:
    t0 = time.perf_counter()
    truth_dir = Path(args.truth_dir)
    times, obs, _ = ingest(truth_dir / "data.csv", "wide")
    loading = read_matrix_csv(truth_dir / "truth_loading.csv")
    sigma = read_matrix_csv(truth_dir / "truth_sigma.csv")[0]
    lam_flat, _ = read_matrix_csv(truth_dir / "truth_lambdas.csv", has_header=True)
    k = loading.shape[1]
    lambdas = lam_flat.reshape(len(times), k, k)
    truth_covs = np.einsum("qi,nij,rj->nqr", loading, lambdas, loading)
    idx = np.arange(loading.shape[0])
    truth_covs[:, idx, idx] += sigma

    config = _fit_config(args)
    rows = []
    for name in args.models.split(","):
        name = name.strip()
        if name in ("ghefm", "ghofm"):
            model_args = argparse.Namespace(**vars(args))
            model_args.model = name
            params, _, h_hat, _ = _fit_factor_model(model_args, times, obs, config)
            covs = marginal_covariance(times, params)
        elif name.startswith("ewma"):
            alpha = float(name.split(":")[1]) if ":" in name else 0.94
            model = ewma_fit(obs, times, args.k, alpha)
            covs = model.covariance_at_position(np.arange(1.0, len(times) + 1))
        else:
            raise ConfigError(f"unknown comparison model {name!r}")
        rows.append((name, average_kl(truth_covs, covs)))

    out = Path(args.out)
    lines = ["model,average_kl"] + [f"{n},{v!r}" for n, v in rows]
    atomic_write_text(out / "kl_table.csv", "\n".join(lines) + "\n")
    report = new_report("kl-compare")
    report.update({
        "seed": args.seed, "n_times": int(len(times)),
        "n_outputs": int(obs.shape[1]), "k_hat": args.k,
        "scores": {n: float(v) for n, v in rows},
        "files": ["kl_table.csv"],
        "timings": {"total_seconds": time.perf_counter() - t0},
    })
    write_report(out / "report.json", report)
    return 0


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--rel-tol", type=float, default=1e-6)
    p.add_argument("--config", default=None,
                   help="JSON file of option defaults (flags override)")


def _add_data_opts(p):
    p.add_argument("--data", required=True)
    p.add_argument("--layout", choices=["wide", "long-spatiotemporal"],
                   default="wide")
    p.add_argument("--log-returns", action="store_true")
    p.add_argument("--trim-k", type=float, default=None,
                   help="clamp each coordinate at k standard deviations")


def _add_model_opts(p):
    p.add_argument("--model", choices=ALL_MODELS, default="ghefm")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--k-space", type=int, default=None)
    p.add_argument("--nu", type=float, default=6.0)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--bandwidth", default="auto",
                   help="fixed bandwidth, or 'auto' for grid selection")
    p.add_argument("--grid-size", type=int, default=16)
    p.add_argument("--refresh", type=int, default=1,
                   help="EM iterations between bandwidth re-selections")
    p.add_argument("--regularization",
                   choices=["free", "diagonal", "inverse-wishart"],
                   default="free")
    p.add_argument("--tv-sigma", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tvcov",
        description="Time-varying covariance estimation via basis-covariance "
                    "factor models",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = dict(formatter_class=argparse.ArgumentDefaultsHelpFormatter)

    p = sub.add_parser("simulate", help="draw a synthetic dataset with truth",
                       **fmt)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--q", type=int, default=130)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--gamma", type=float, default=3.0)
    p.add_argument("--s2", type=float, default=0.25)
    p.add_argument("--family", choices=["gaussian", "student_t"],
                   default="gaussian")
    p.add_argument("--nu", type=float, default=6.0)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one model and write its artifacts",
                       **fmt)
    p.add_argument("--out", required=True)
    _add_data_opts(p)
    _add_model_opts(p)
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", help="choose K by cross-validation, then refit",
                       **fmt)
    p.add_argument("--out", required=True)
    p.add_argument("--k-candidates", default="1:12",
                   help="e.g. '1:12' or '2,4,8'")
    p.add_argument("--splits", type=int, default=12)
    p.add_argument("--ratio", type=float, default=0.1)
    p.add_argument("--split-mode", choices=["random", "blockwise"],
                   default="random")
    p.add_argument("--jobs", type=int, default=1)
    _add_data_opts(p)
    _add_model_opts(p)
    _add_common(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("identify",
                       help="orthonormalize and sparsify a fitted model",
                       **fmt)
    p.add_argument("--model-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--step-size", type=float, default=1e-2)
    p.add_argument("--max-steps", type=int, default=5000)
    p.add_argument("--check-every", type=int, default=10)
    _add_common(p)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("forecast", help="one-step-forward predict/score/update",
                       **fmt)
    p.add_argument("--out", required=True)
    p.add_argument("--train-count", type=int, required=True)
    p.add_argument("--roll-iter", type=int, default=50,
                   help="EM iterations per rolling basis refresh")
    _add_data_opts(p)
    _add_model_opts(p)
    _add_common(p)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("similarity",
                       help="cosine similarity matrix of loading rows",
                       **fmt)
    p.add_argument("--model-dir", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("kl-compare",
                       help="average KL from a simulated truth to fitted models",
                       **fmt)
    p.add_argument("--truth-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--models", default="ghefm,ghofm,ewma:0.98")
    _add_data_opts_optional(p)
    _add_model_opts(p)
    _add_common(p)
    p.set_defaults(func=cmd_kl_compare)

    return parser


def _add_data_opts_optional(p):
    p.add_argument("--layout", choices=["wide"], default="wide")
    p.add_argument("--log-returns", action="store_true")
    p.add_argument("--trim-k", type=float, default=None)


def _apply_config_file(args, argv) -> None:
    if not args.config:
        return
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        values = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    explicit = {a.split("=")[0].lstrip("-").replace("-", "_")
                for a in argv if a.startswith("--")}
    for key, value in values.items():
        dest = key.replace("-", "_")
        if dest in explicit or not hasattr(args, dest):
            continue
        setattr(args, dest, value)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_file(args, argv)
        return args.func(args)
    except (ConfigError, InvalidParamsError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
