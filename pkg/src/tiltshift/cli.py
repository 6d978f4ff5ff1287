"""Batch front end: ``tiltshift {estimate,optimize,sensitivity,simulate}``.

A JSON config document drives each run; command-line flags override config
fields. Outputs are CSV tables (with the full config echoed on a leading
'#' comment line), JSON reports, and PNG figures on the report paths. Exit
codes: 0 success, 2 config error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import copy
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import figures
from .dataset import CsvSchema, Dataset, load_csv, standardize
from .estimator import (
    NuisanceBundle,
    TiltEvaluator,
    estimate_nu,
    fit_nuisance_bundle,
    theta,
)
from .geometry import (
    ConstraintSpec,
    GelbrichConstraint,
    NumericError,
    efficient_direction,
    single_exposure_direction,
)
from .nuisance import fit_exposure_model, make_learner
from .optimizer import RBFGSOptions, init_on_manifold, multistart
from .sensitivity import (
    SensitivityParams,
    benchmark_outcome,
    benchmark_rr,
    calibrate,
    endpoint_bounds,
    robustness_contour,
    scales_from_values,
)
from .simbench import DESIGNS, PIPELINES, DGPSpec, generate, run_benchmark

__all__ = ["main", "run", "group_shift_direction", "ConfigError"]


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


_DEFAULTS = {
    "standardize": True,
    "n_folds": 5,
    "seed": 0,
    "draws": 1000,
    "path": "ratio_regression",
    "exposure_family": "gaussian",
    "learners": {},
    "delta": {"mode": "efficient"},
    "gelbrich_targets": [0.05, 0.1, 0.15, 0.2, 0.25],
    "constraint": {"mc_draws": 50_000, "fd_step": 1e-3},
    "optimize": {"n_starts": 10, "max_iter": 100, "grad_tol": 1e-5,
                 "objective_draws": 400, "compare_paths": True},
    "sensitivity": {"eta_y_sq": 0.1, "eta_alpha_sq": 0.1, "benchmark": False,
                    "contour": True, "k_y": 1.0, "k_d": 1.0},
    "simulate": {"reps": 10, "n": 500, "draws": 300, "pipelines": list(PIPELINES),
                 "designs": ["/".join(d) for d in DESIGNS]},
    "figures": True,
    "threads": 1,
}


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def _write_csv(path: Path, header: list[str], rows: list[list], config: dict) -> None:
    lines = ["# config: " + json.dumps(config, sort_keys=True)]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, payload: dict, config: dict) -> None:
    doc = {"config": config, **payload}
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


# ---------------------------------------------------------------------------
# group shifts


def group_shift_direction(group, constraint: GelbrichConstraint, c: float,
                          fd_step: float = 1e-3, max_iter: int = 50,
                          tol: float = 1e-6) -> np.ndarray:
    """Tilt that moves the marginal means of the exposures in ``group`` by a
    common amount, holds the remaining means fixed, and satisfies G = c^2.

    Damped Newton on the (normalized) moment-map residual; the Gaussian
    closed form Sigma^{-1} 1_group scaled to the constraint is the start.
    """
    q = constraint.q
    group = sorted(set(int(g) for g in group))
    if not group or any(g < 0 or g >= q for g in group):
        raise ValueError("group must be a nonempty subset of exposure indices")
    outside = [j for j in range(q) if j not in group]
    mask = np.zeros(q)
    mask[group] = 1.0
    Sigma = constraint._baseline.cov
    start = np.linalg.solve(Sigma, mask)
    start *= c / math_sqrt(len(group))

    def residual(delta):
        shift = constraint.mean_shift(delta)
        parts = [shift[outside] / c] if outside else []
        if len(group) > 1:
            parts.append((shift[group[1:]] - shift[group[0]]) / c)
        parts.append(np.array([(constraint.value(delta) - c * c) / (c * c)]))
        return np.concatenate(parts)

    delta = start
    f = residual(delta)
    for _ in range(max_iter):
        if np.max(np.abs(f)) <= tol:
            return delta
        J = np.empty((f.size, q))
        for j in range(q):
            e = np.zeros(q)
            e[j] = fd_step
            J[:, j] = (residual(delta + e) - residual(delta - e)) / (2 * fd_step)
        try:
            step = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -f, rcond=None)[0]
        alpha = 1.0
        for _ in range(30):
            cand = delta + alpha * step
            fc = residual(cand)
            if np.max(np.abs(fc)) < np.max(np.abs(f)):
                delta, f = cand, fc
                break
            alpha /= 2.0
        else:
            break
    if np.max(np.abs(f)) > tol:
        raise NumericError(
            f"group-shift Newton stalled at residual {np.max(np.abs(f)):.3e}"
        )
    return delta


def math_sqrt(x) -> float:
    return float(np.sqrt(x))


# ---------------------------------------------------------------------------
# orchestration helpers


def _load_dataset(config: dict) -> Dataset:
    if "data" in config and config["data"]:
        spec = config["data"]
        for key in ("path", "covariates", "exposures", "outcome"):
            if key not in spec:
                raise ConfigError(f"data.{key} is required")
        schema = CsvSchema(
            covariates=tuple(spec["covariates"]),
            exposures=tuple(spec["exposures"]),
            outcome=spec["outcome"],
            delimiter=spec.get("delimiter", ","),
        )
        d = load_csv(spec["path"], schema, non_finite=spec.get("non_finite", "reject"))
    elif "dgp" in config and config["dgp"]:
        g = dict(config["dgp"])
        seed = g.pop("seed", config["seed"])
        d, _ = generate(DGPSpec(**g), seed=seed)
    else:
        raise ConfigError("config needs either 'data' or 'dgp'")
    if config["standardize"]:
        d = standardize(d)
    return d


def _fit_bundle(d: Dataset, config: dict) -> NuisanceBundle:
    learners = config["learners"]
    return fit_nuisance_bundle(
        d,
        n_folds=config["n_folds"],
        outcome_learner=learners.get("outcome"),
        exposure_family=config["exposure_family"],
        exposure_mean_learner=learners.get("exposure_mean"),
        nu_learner=learners.get("nu"),
        eta_learner=learners.get("eta"),
        fit_exposure=config["path"] != "fully_direct",
        seed=config["seed"],
    )


def _constraint(d: Dataset, config: dict, c_ref: float) -> GelbrichConstraint:
    # the constraint is population geometry, so it uses one full-data model
    learners = config["learners"]
    mean_spec = learners.get("exposure_mean")
    model = fit_exposure_model(
        d,
        family=config["exposure_family"],
        mean_learner=make_learner(mean_spec) if mean_spec else None,
        seed=config["seed"],
    )
    spec = ConstraintSpec(
        c=c_ref,
        mc_draws=config["constraint"]["mc_draws"],
        fd_step=config["constraint"]["fd_step"],
        seed=config["seed"],
    )
    return GelbrichConstraint.from_dataset(model, d, spec)


def _directions(d: Dataset, config: dict, constraint: GelbrichConstraint):
    """Resolve the delta specification into labelled unit rays (or solved
    group tilts) per Gelbrich target."""
    mode = config["delta"].get("mode", "efficient")
    Sigma = constraint._baseline.cov
    targets = [float(c) for c in config["gelbrich_targets"]]
    names = d.exposure_names or tuple(f"w{j}" for j in range(d.q))
    out = []
    if mode == "explicit":
        vec = np.asarray(config["delta"].get("vector"), dtype=float)
        if vec.shape != (d.q,):
            raise ConfigError(f"delta.vector must have length q={d.q}")
        out.append(("explicit", lambda c, v=vec: init_on_manifold(v, constraint, c)))
    elif mode == "single":
        j = config["delta"].get("index")
        if j is None or not 0 <= int(j) < d.q:
            raise ConfigError("delta.index must name an exposure column")
        j = int(j)
        ray = single_exposure_direction(Sigma, j, 1.0)
        out.append((f"single:{names[j]}",
                    lambda c, v=ray: init_on_manifold(v, constraint, c)))
    elif mode == "efficient":
        ray = efficient_direction(Sigma, 1.0)
        out.append(("efficient", lambda c, v=ray: init_on_manifold(v, constraint, c)))
    elif mode == "group":
        group = config["delta"].get("group")
        if not group:
            raise ConfigError("delta.group must list exposure indices")
        label = "group:" + "+".join(names[int(g)] for g in group)
        out.append((label, lambda c, g=tuple(group): group_shift_direction(
            g, constraint, c, fd_step=config["constraint"]["fd_step"])))
    else:
        raise ConfigError(f"unknown delta mode {mode!r}")
    return out, targets


def _curve_rows(d, bundle, config, labelled, targets):
    rows = []
    reports = []
    for label, solve in labelled:
        for c in [0.0] + targets:
            delta = np.zeros(d.q) if c == 0.0 else solve(c)
            rep = theta(d, bundle, delta, path=config["path"],
                        draws=config["draws"], seed=config["seed"], label=label)
            rows.append([label, c] + [delta[j] for j in range(d.q)]
                        + [rep.psi_hat, rep.theta_hat, rep.se_theta,
                           rep.ci_theta[0], rep.ci_theta[1], config["path"]])
            reports.append((label, c, rep))
    return rows, reports


def _curve_header(d: Dataset) -> list[str]:
    names = d.exposure_names or tuple(f"w{j}" for j in range(d.q))
    return (["label", "gelbrich_target"] + [f"delta_{n}" for n in names]
            + ["psi_hat", "theta_hat", "se_theta", "ci_lo", "ci_hi", "path"])


# ---------------------------------------------------------------------------
# subcommands


def _run_estimate(config: dict, out: Path) -> list[Path]:
    d = _load_dataset(config)
    bundle = _fit_bundle(d, config)
    targets = [float(c) for c in config["gelbrich_targets"]]
    constraint = _constraint(d, config, c_ref=max(targets) if targets else 0.25)
    labelled, targets = _directions(d, config, constraint)
    rows, reports = _curve_rows(d, bundle, config, labelled, targets)
    files = []
    curve = out / "estimate_curve.csv"
    _write_csv(curve, _curve_header(d), rows, config)
    files.append(curve)
    rep_json = out / "estimate_reports.json"
    _write_json(rep_json, {
        "reports": [
            {"label": label, "gelbrich_target": c, **rep.to_dict()}
            for label, c, rep in reports
        ],
    }, config)
    files.append(rep_json)
    if config["figures"]:
        fig_rows = [
            {"label": r[0], "gelbrich_target": r[1],
             "theta_hat": r[2 + d.q], "ci_lo": r[5 + d.q], "ci_hi": r[6 + d.q]}
            for r in rows
        ]
        files.append(Path(figures.save_estimate_curve(fig_rows, out / "estimate_curve.png")))
    return files


def _run_optimize(config: dict, out: Path) -> list[Path]:
    d = _load_dataset(config)
    if config["path"] == "fully_direct":
        raise ConfigError("optimize needs an exposure-density path")
    bundle = _fit_bundle(d, config)
    opt_cfg = config["optimize"]
    evaluator = TiltEvaluator(d, bundle, draws=opt_cfg["objective_draws"],
                              seed=config["seed"])
    objective = evaluator.objective(path="mc_density")
    targets = [float(c) for c in config["gelbrich_targets"] if float(c) > 0]
    if not targets:
        raise ConfigError("optimize needs positive gelbrich_targets")
    constraint = _constraint(d, config, c_ref=max(targets))
    options = RBFGSOptions(grad_tol=opt_cfg["grad_tol"], max_iter=opt_cfg["max_iter"])
    names = d.exposure_names or tuple(f"w{j}" for j in range(d.q))
    winner_rows, start_rows = [], []
    obj_by_target, delta_by_target = {}, {}
    compare_rows = []
    for c in targets:
        options_c = replace(options, feas_tol=1e-6 * c * c)
        winner, all_runs = multistart(objective, constraint, c, q=d.q,
                                      n_starts=opt_cfg["n_starts"],
                                      seed=config["seed"], options=options_c)
        rep = theta(d, bundle, winner.delta, path=config["path"],
                    draws=config["draws"], seed=config["seed"], label="bfgs")
        winner_rows.append([c] + list(winner.delta)
                           + [winner.value, rep.theta_hat, rep.se_theta,
                              rep.ci_theta[0], rep.ci_theta[1],
                              int(winner.converged), winner.start_index])
        for run in all_runs:
            start_rows.append([c, run.start_index, run.value, run.grad_norm,
                               int(run.converged), run.n_iter] + list(run.delta))
        obj_by_target[c] = [run.value for run in all_runs]
        delta_by_target[c] = np.array([run.delta for run in all_runs])
        if opt_cfg.get("compare_paths", True):
            Sigma = constraint._baseline.cov
            for j in range(d.q):
                dj = init_on_manifold(single_exposure_direction(Sigma, j, 1.0),
                                      constraint, c)
                compare_rows.append([c, f"single:{names[j]}", objective(dj)])
            compare_rows.append([c, "bfgs", winner.value])
    files = []
    wpath = out / "optimize_winners.csv"
    _write_csv(wpath, ["gelbrich_target"] + [f"delta_{n}" for n in names]
               + ["objective", "theta_hat", "se_theta", "ci_lo", "ci_hi",
                  "converged", "start_index"], winner_rows, config)
    files.append(wpath)
    spath = out / "optimize_starts.csv"
    _write_csv(spath, ["gelbrich_target", "start", "objective", "grad_norm",
                       "converged", "n_iter"] + [f"delta_{n}" for n in names],
               start_rows, config)
    files.append(spath)
    if compare_rows:
        cpath = out / "optimize_path_comparison.csv"
        _write_csv(cpath, ["gelbrich_target", "label", "objective"],
                   compare_rows, config)
        files.append(cpath)
    if config["figures"]:
        files.append(Path(figures.save_multistart_objectives(
            obj_by_target, out / "optimize_objectives.png")))
        files.append(Path(figures.save_multistart_deltas(
            delta_by_target, names, out / "optimize_deltas.png")))
    return files


def _run_sensitivity(config: dict, out: Path) -> list[Path]:
    d = _load_dataset(config)
    bundle = _fit_bundle(d, config)
    targets = [float(c) for c in config["gelbrich_targets"] if float(c) > 0]
    constraint = _constraint(d, config, c_ref=max(targets) if targets else 0.25)
    labelled, _ = _directions(d, config, constraint)
    s_cfg = config["sensitivity"]
    files = []
    bench_rows = []
    if s_cfg.get("benchmark"):
        for j in range(d.p):
            eta_sq, f_sq = benchmark_outcome(d, j)
            name = d.covariate_names[j] if d.covariate_names else f"x{j}"
            bench_rows.append([name, eta_sq, f_sq,
                               calibrate(f_sq, s_cfg.get("k_y", 1.0))])
    bound_rows, contours = [], {}
    for label, solve in labelled:
        contour_best = None
        for c in targets:
            delta = solve(c)
            rep = theta(d, bundle, delta, path=config["path"],
                        draws=config["draws"], seed=config["seed"], label=label)
            sc = scales_from_values(d.Y, rep.mu_values, rep.ratio_values)
            if s_cfg.get("benchmark") and bench_rows:
                f_y = max(r[2] for r in bench_rows)
                eta_y_sq = calibrate(f_y, s_cfg.get("k_y", 1.0))
                f_a = max(benchmark_rr(d, None, delta, j, alpha_values=rep.ratio_values)
                          for j in range(d.p))
                eta_a_sq = calibrate(f_a, s_cfg.get("k_d", 1.0))
            else:
                eta_y_sq = s_cfg["eta_y_sq"]
                eta_a_sq = s_cfg["eta_alpha_sq"]
            params = SensitivityParams(eta_y_sq=eta_y_sq, eta_alpha_sq=eta_a_sq,
                                       k_y=s_cfg.get("k_y"), k_d=s_cfg.get("k_d"))
            srep = endpoint_bounds(rep, sc, params)
            bound_rows.append([label, c, srep.theta_hat, srep.s_hat, srep.b_hat,
                               srep.theta_lo, srep.theta_hi, srep.ci_lo, srep.ci_hi,
                               eta_y_sq, eta_a_sq, int(srep.degenerate)])
            if s_cfg.get("contour", True) and rep.theta_hat < 0:
                pts = robustness_contour(rep, sc)
                if pts and (contour_best is None or pts[0][1] < contour_best[1][0][1]):
                    contour_best = (c, pts)
        if contour_best is not None:
            contours[f"{label}@c={contour_best[0]:g}"] = contour_best[1]
    bpath = out / "sensitivity_bounds.csv"
    _write_csv(bpath, ["label", "gelbrich_target", "theta_hat", "s_hat", "b_hat",
                       "theta_lo", "theta_hi", "ci_lo", "ci_hi", "eta_y_sq",
                       "eta_alpha_sq", "degenerate"], bound_rows, config)
    files.append(bpath)
    if bench_rows:
        benchpath = out / "sensitivity_benchmarks.csv"
        _write_csv(benchpath, ["covariate", "eta_sq", "f_sq", "eta_sq_calibrated"],
                   bench_rows, config)
        files.append(benchpath)
    if contours:
        crows = [[label, ey, ea] for label, pts in sorted(contours.items())
                 for ey, ea in pts]
        cpath = out / "sensitivity_contours.csv"
        _write_csv(cpath, ["label", "eta_y_sq", "eta_alpha_sq"], crows, config)
        files.append(cpath)
    if config["figures"]:
        fig_rows = [{"label": r[0], "gelbrich_target": r[1], "theta_hat": r[2],
                     "ci_lo": r[7], "ci_hi": r[8]} for r in bound_rows]
        files.append(Path(figures.save_sensitivity_bounds(
            fig_rows, out / "sensitivity_bounds.png")))
        if contours:
            files.append(Path(figures.save_contours(
                contours, out / "sensitivity_contours.png")))
    return files


def _run_simulate(config: dict, out: Path) -> list[Path]:
    s = config["simulate"]
    designs = [tuple(name.split("/")) for name in s["designs"]]
    table = run_benchmark(
        designs=designs,
        pipelines=tuple(s["pipelines"]),
        reps=int(s["reps"]),
        n=int(s["n"]),
        seed=config["seed"],
        draws=int(s["draws"]),
        n_folds=config["n_folds"],
        learners=config["learners"] or None,
        threads=int(config["threads"]),
        truth_draws=int(s.get("truth_draws", 1_000_000)),
    )
    files = []
    agg = out / "simulate_metrics.csv"
    _write_csv(agg, ["pipeline", "mean_bias", "mean_abs_bias", "rmse"],
               [[r["pipeline"], r["mean_bias"], r["mean_abs_bias"], r["rmse"]]
                for r in table.aggregate_rows], config)
    files.append(agg)
    per_design = out / "simulate_metrics_by_design.csv"
    _write_csv(per_design,
               ["pipeline", "design", "reps_done", "failures", "bias",
                "abs_bias", "rmse"],
               [[r["pipeline"], r["design"], r["reps_done"], r["failures"],
                 r["bias"], r["abs_bias"], r["rmse"]] for r in table.design_rows],
               config)
    files.append(per_design)
    per_rep = out / "simulate_per_rep.csv"
    _write_csv(per_rep, ["design", "rep", "pipeline", "estimate", "truth", "error"],
               [[r["design"], r["rep"], r.get("pipeline", ""),
                 r.get("estimate", ""), r.get("truth", ""), r.get("error", "")]
                for r in table.per_rep], config)
    files.append(per_rep)
    txt = out / "simulate_metrics.txt"
    txt.write_text(table.to_text() + "\n")
    files.append(txt)
    return files


_RUNNERS = {
    "estimate": _run_estimate,
    "optimize": _run_optimize,
    "sensitivity": _run_sensitivity,
    "simulate": _run_simulate,
}


def run(config: dict) -> list[Path]:
    """Execute one subcommand from a fully merged config; returns the files
    written (a run manifest is always included)."""
    sub = config.get("subcommand")
    if sub not in _RUNNERS:
        raise ConfigError(f"subcommand must be one of {sorted(_RUNNERS)}")
    out = Path(config.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    files = _RUNNERS[sub](config, out)
    manifest = out / "run_manifest.json"
    _write_json(manifest, {"outputs": [f.name for f in files]}, config)
    files.append(manifest)
    return files


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tiltshift",
        description="Incremental effects of multivariate exposure tilts",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _RUNNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--data", help="CSV data path (overrides config)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--threads", type=int, help="parallel workers")
        p.add_argument("--no-figures", action="store_true",
                       help="skip PNG rendering")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = copy.deepcopy(_DEFAULTS)
        if args.config:
            cfg_path = Path(args.config)
            if not cfg_path.exists():
                raise ConfigError(f"config file {cfg_path} does not exist")
            config = _merge(config, json.loads(cfg_path.read_text()))
        config["subcommand"] = args.subcommand
        if args.data:
            config.setdefault("data", {})
            config["data"]["path"] = args.data
        if args.out:
            config["out"] = args.out
        if args.seed is not None:
            config["seed"] = args.seed
        if args.threads is not None:
            config["threads"] = args.threads
        if args.no_figures:
            config["figures"] = False
        if "data" in config and config.get("data") and not Path(config["data"].get("path", "")).exists():
            raise ConfigError(f"data path {config['data'].get('path')!r} does not exist")
    except (ConfigError, json.JSONDecodeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        files = run(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 3
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
