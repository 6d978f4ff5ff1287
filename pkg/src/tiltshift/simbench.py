"""Simulation designs, oracle truths, and a Monte Carlo benchmark harness
comparing the seven estimation pipelines on bias / absolute bias / RMSE.

Exposure scenarios: gaussian, skew_normal, truncated_contaminated (all
location-shift around B'X). Outcome scenarios: linear and complex (quadratic
covariate, exposure cross-product, covariate-exposure interaction).
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import Dataset, assign_folds
from .estimator import (
    NuisanceBundle,
    _mc_components,
    _xw,
    estimate_eta,
    estimate_nu,
    fit_nuisance_bundle,
    onestep_psi,
)
from .geometry import efficient_direction
from .nuisance import (
    ConditionalExposureModel,
    FunctionRegressor,
    fit_location,
    fit_residual_family,
    make_learner,
)

__all__ = [
    "EXPOSURE_SCENARIOS",
    "OUTCOME_SCENARIOS",
    "DESIGNS",
    "PIPELINES",
    "DGPSpec",
    "DGPCoefficients",
    "OracleHandles",
    "TruePsi",
    "MetricTable",
    "draw_coefficients",
    "generate",
    "true_psi",
    "benchmark_delta",
    "make_oracle_bundle",
    "run_benchmark",
]

EXPOSURE_SCENARIOS = ("gaussian", "skew_normal", "truncated_contaminated")
OUTCOME_SCENARIOS = ("linear", "complex")
DESIGNS = tuple(
    (e, o) for e in EXPOSURE_SCENARIOS for o in OUTCOME_SCENARIOS
)

# family x ratio-method pipelines plus the density-free one
PIPELINES = (
    "gaussian_mc",
    "gaussian_direct",
    "t_mc",
    "t_direct",
    "empirical_mc",
    "empirical_direct",
    "fully_direct",
)
_FAMILY_OF = {"gaussian": "gaussian", "t": "student_t", "empirical": "empirical"}


@dataclass(frozen=True)
class DGPSpec:
    """Design parameters; coefficient draws are fixed by ``coef_seed``."""

    n: int = 5000
    p: int = 10
    q: int = 6
    exposure_scenario: str = "gaussian"
    outcome_scenario: str = "linear"
    coef_seed: int = 0
    rho: float = 0.6               # AR(1) parameter of the error covariance
    slant: float = 4.0             # per-coordinate skew-normal slant
    contamination: float = 0.2     # mixture weight of the inflated component
    inflation: float = 1.5         # scale multiplier of the contaminated part
    trunc_sds: float = 6.0         # support bound in baseline standard deviations
    sparsity: float = 0.4          # P(entry of B is nonzero)
    c1: float = 0.5
    c2: float = 1.0
    c3: float = 0.8

    def __post_init__(self):
        if self.exposure_scenario not in EXPOSURE_SCENARIOS:
            raise ValueError(f"unknown exposure scenario {self.exposure_scenario!r}")
        if self.outcome_scenario not in OUTCOME_SCENARIOS:
            raise ValueError(f"unknown outcome scenario {self.outcome_scenario!r}")
        if not (0 <= self.contamination <= 1 and self.inflation > 0):
            raise ValueError("invalid contamination parameters")


def _ar1(dim: int, rho: float) -> np.ndarray:
    idx = np.arange(dim)
    return rho ** np.abs(idx[:, None] - idx[None, :])


@dataclass(frozen=True)
class DGPCoefficients:
    B: np.ndarray
    beta0: np.ndarray
    alpha0: float
    alpha: np.ndarray
    beta: np.ndarray
    Sigma_X: np.ndarray
    Sigma_W: np.ndarray


def draw_coefficients(spec: DGPSpec) -> DGPCoefficients:
    """Coefficients as a deterministic function of ``spec.coef_seed``:
    sparse B with N(0, 0.6^2) nonzeros, alpha ~ N(0.5, 1), beta ~ N(2, 1),
    zero intercepts."""
    rng = np.random.default_rng(np.random.SeedSequence((spec.coef_seed, 0xC0EF)))
    mask = rng.random((spec.p, spec.q)) < spec.sparsity
    B = np.where(mask, rng.normal(0.0, 0.6, size=(spec.p, spec.q)), 0.0)
    alpha = rng.normal(0.5, 1.0, size=spec.p)
    beta = rng.normal(2.0, 1.0, size=spec.q)
    return DGPCoefficients(
        B=B,
        beta0=np.zeros(spec.q),
        alpha0=0.0,
        alpha=alpha,
        beta=beta,
        Sigma_X=_ar1(spec.p, 0.5),
        Sigma_W=_ar1(spec.q, spec.rho),
    )


def _sample_errors(spec: DGPSpec, coeffs: DGPCoefficients, m: int,
                   rng: np.random.Generator) -> np.ndarray:
    L = np.linalg.cholesky(coeffs.Sigma_W)
    if spec.exposure_scenario == "gaussian":
        return rng.standard_normal((m, spec.q)) @ L.T
    if spec.exposure_scenario == "skew_normal":
        # per-coordinate hidden truncation: marginals are exactly SN(0, 1, slant)
        d = spec.slant / math.sqrt(1.0 + spec.slant**2)
        Z0 = rng.standard_normal((m, spec.q)) @ L.T
        Z1 = rng.standard_normal((m, spec.q)) @ L.T
        return d * np.abs(Z0) + math.sqrt(1.0 - d * d) * Z1
    # truncated contaminated normal: mixture, rejected outside the 6-sd box
    bound = spec.trunc_sds * np.sqrt(np.diag(coeffs.Sigma_W))
    out = np.empty((m, spec.q))
    filled = 0
    while filled < m:
        todo = m - filled
        draw = rng.standard_normal((todo, spec.q)) @ L.T
        inflate = rng.random(todo) < spec.contamination
        draw[inflate] *= spec.inflation
        keep = np.all(np.abs(draw) <= bound, axis=1)
        kept = draw[keep]
        out[filled:filled + kept.shape[0]] = kept
        filled += kept.shape[0]
    return out


@dataclass
class OracleHandles:
    """True quantities of the generating process, for tests and oracle runs."""

    spec: DGPSpec
    coeffs: DGPCoefficients

    def mu(self, X: np.ndarray, W: np.ndarray) -> np.ndarray:
        """True outcome regression E[Y | X, W]."""
        X = np.atleast_2d(X)
        W = np.atleast_2d(W)
        c = self.coeffs
        out = c.alpha0 + X @ c.alpha + W @ c.beta
        if self.spec.outcome_scenario == "complex":
            out = out + self.spec.c1 * X[:, 1] ** 2 + self.spec.c2 * W[:, 0] * W[:, 1] \
                + self.spec.c3 * X[:, 0] * W[:, 0]
        return out

    def sample_errors(self, m: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0xE44)))
        return _sample_errors(self.spec, self.coeffs, m, rng)

    def exposure_mean_fns(self):
        """Per-coordinate conditional-mean callables x -> E[W_j | X=x] minus
        the error mean (exact for the gaussian scenario)."""
        c = self.coeffs
        return [
            (lambda j: (lambda X: np.atleast_2d(X) @ c.B[:, j] + c.beta0[j]))(j)
            for j in range(self.spec.q)
        ]

    @property
    def has_closed_form(self) -> bool:
        return (self.spec.exposure_scenario == "gaussian"
                and self.spec.outcome_scenario == "linear")


def generate(spec: DGPSpec, seed: int) -> tuple[Dataset, OracleHandles]:
    """Draw one dataset: X ~ N(0, Sigma_X AR(0.5)), W = B'X + beta0 + errors,
    Y per the outcome scenario with unit Gaussian noise."""
    coeffs = draw_coefficients(spec)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xDA7A)))
    LX = np.linalg.cholesky(coeffs.Sigma_X)
    X = rng.standard_normal((spec.n, spec.p)) @ LX.T
    eps = _sample_errors(spec, coeffs, spec.n, rng)
    W = X @ coeffs.B + coeffs.beta0 + eps
    oracle = OracleHandles(spec=spec, coeffs=coeffs)
    Y = oracle.mu(X, W) + rng.standard_normal(spec.n)
    return Dataset(X=X, W=W, Y=Y), oracle


@dataclass(frozen=True)
class TruePsi:
    value: float
    mc_se: float
    method: str


def true_psi(spec: DGPSpec, delta: np.ndarray, oracle: OracleHandles,
             draws: int = 1_000_000, seed: int = 17) -> TruePsi:
    """Oracle value of the estimand under the design.

    Gaussian errors with a linear outcome have the closed form
    alpha0 + beta'beta0 + beta' Sigma_W delta (covariates are centered);
    every other design is evaluated by self-normalized importance-weighted
    Monte Carlo with fresh error draws per covariate draw.
    """
    delta = np.asarray(delta, dtype=float).reshape(-1)
    c = oracle.coeffs
    if oracle.has_closed_form:
        value = c.alpha0 + c.beta @ c.beta0 + c.beta @ (c.Sigma_W @ delta)
        return TruePsi(value=float(value), mc_se=0.0, method="closed_form")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x7B0E)))
    n_x = 2000
    m_e = max(16, int(np.ceil(draws / n_x)))
    LX = np.linalg.cholesky(c.Sigma_X)
    X = rng.standard_normal((n_x, spec.p)) @ LX.T
    vals = np.empty(n_x)
    block = max(1, 200_000 // m_e)
    for start in range(0, n_x, block):
        Xb = X[start:start + block]
        nb = Xb.shape[0]
        eps = _sample_errors(spec, c, nb * m_e, rng).reshape(nb, m_e, spec.q)
        Wb = (Xb @ c.B + c.beta0)[:, None, :] + eps
        logw = Wb @ delta
        logw -= logw.max(axis=1, keepdims=True)
        wgt = np.exp(logw)
        wgt /= wgt.sum(axis=1, keepdims=True)
        mu = oracle.mu(np.repeat(Xb, m_e, axis=0), Wb.reshape(nb * m_e, spec.q))
        vals[start:start + nb] = (wgt * mu.reshape(nb, m_e)).sum(axis=1)
    return TruePsi(value=float(vals.mean()),
                   mc_se=float(vals.std(ddof=1) / math.sqrt(n_x)),
                   method="importance_mc")


def benchmark_delta(spec: DGPSpec, c: float = 0.25, calib_n: int = 20_000,
                    seed: int = 99) -> np.ndarray:
    """Per-design benchmark tilt: the efficient direction of the empirical
    exposure covariance from one large calibration draw, at Gelbrich size c.
    Fixed across repetitions so the oracle truth is constant."""
    data, _ = generate(replace(spec, n=calib_n), seed=seed)
    return efficient_direction(np.cov(data.W, rowvar=False), c)


def make_oracle_bundle(d: Dataset, oracle: OracleHandles, n_folds: int = 5,
                       seed: int = 0) -> NuisanceBundle:
    """Bundle with the true outcome regression and the true (gaussian)
    exposure law injected in every fold; gaussian errors only."""
    if oracle.spec.exposure_scenario != "gaussian":
        raise ValueError("oracle bundle requires the gaussian exposure scenario")
    folds = assign_folds(d.n, n_folds, seed)
    p = oracle.spec.p
    mu_fn = FunctionRegressor(lambda Z: oracle.mu(Z[:, :p], Z[:, p:]))
    exposure = ConditionalExposureModel.from_gaussian(
        oracle.exposure_mean_fns(), oracle.coeffs.Sigma_W
    )
    w_norm_max = float(np.linalg.norm(d.W, axis=1).max())
    delta_max = 10.0 / w_norm_max
    tau = delta_max * w_norm_max
    return NuisanceBundle(
        folds=folds,
        mu_models=[mu_fn] * n_folds,
        exposure_models=[exposure] * n_folds,
        delta_max=delta_max,
        nu_bounds=(np.exp(-tau) / 2.0, 2.0 * np.exp(tau)),
        w_norm_max=w_norm_max,
        meta={"oracle": True},
    )


# ---------------------------------------------------------------------------
# benchmark harness

_DEFAULT_LEARNERS = {
    "outcome": {"kind": "gbt", "n_trees": 120, "depth": 2, "rate": 0.1,
                "min_samples_leaf": 10},
    "exposure_mean": {"kind": "gbt", "n_trees": 80, "depth": 2, "rate": 0.15,
                      "min_samples_leaf": 10},
    "nu": {"kind": "gbt", "n_trees": 80, "depth": 2, "rate": 0.15,
           "min_samples_leaf": 10},
    "eta": {"kind": "gbt", "n_trees": 80, "depth": 2, "rate": 0.15,
            "min_samples_leaf": 10},
}


def _rep_estimates(spec: DGPSpec, delta: np.ndarray, rep_seed: int, draws: int,
                   learners: dict, n_folds: int, pipelines: tuple[str, ...]) -> dict:
    """One repetition: generate, cross-fit shared nuisances, and return the
    one-step estimate for every requested pipeline."""
    data, _ = generate(spec, seed=rep_seed)
    bundle = fit_nuisance_bundle(
        data,
        n_folds=n_folds,
        outcome_learner=learners["outcome"],
        nu_learner=learners["nu"],
        eta_learner=learners["eta"],
        fit_exposure=False,
        seed=rep_seed,
    )
    mean_factory = make_learner(learners["exposure_mean"])
    families = sorted({name.split("_")[0] for name in pipelines if name != "fully_direct"})
    # one location fit per fold, shared by all residual families
    fam_models: dict[str, list] = {fam: [] for fam in families}
    for k in range(n_folds):
        tr = bundle.folds.train_indices(k)
        sub = Dataset(X=data.X[tr], W=data.W[tr], Y=data.Y[tr])
        models, offsets, scales_, eps = fit_location(sub, mean_factory, seed=rep_seed + k)
        for fam in families:
            marginals, R, shrink = fit_residual_family(eps, _FAMILY_OF[fam])
            fam_models[fam].append(ConditionalExposureModel(
                mean_models=models, mean_offsets=offsets, scales=scales_,
                marginals=marginals, family=_FAMILY_OF[fam], copula_corr=R,
                copula_shrinkage=shrink,
            ))
    needs_reg = any(name.endswith("_direct") or name == "fully_direct" for name in pipelines)
    nu = estimate_nu(bundle, data, delta) if needs_reg else None
    t = np.exp(data.W @ delta)
    out: dict[str, float] = {}
    for fam in families:
        fam_bundle = replace_exposure(bundle, fam_models[fam])
        A, N, _ = _mc_components(data, fam_bundle, delta, draws, rep_seed)
        m_tilde = N / A
        if f"{fam}_mc" in pipelines:
            r = t / A
            out[f"{fam}_mc"] = float(np.mean(r * (data.Y - m_tilde) + m_tilde))
        if f"{fam}_direct" in pipelines:
            r = t / nu.values
            out[f"{fam}_direct"] = float(np.mean(r * (data.Y - m_tilde) + m_tilde))
    if "fully_direct" in pipelines:
        eta = estimate_eta(bundle, data, delta)
        m_tilde = eta.values / nu.values
        r = t / nu.values
        out["fully_direct"] = float(np.mean(r * (data.Y - m_tilde) + m_tilde))
    return out


def replace_exposure(bundle: NuisanceBundle, exposure_models: list) -> NuisanceBundle:
    return NuisanceBundle(
        folds=bundle.folds, mu_models=bundle.mu_models,
        exposure_models=exposure_models, delta_max=bundle.delta_max,
        nu_bounds=bundle.nu_bounds, w_norm_max=bundle.w_norm_max,
        nu_learner=bundle.nu_learner, eta_learner=bundle.eta_learner,
        nu_log_scale=bundle.nu_log_scale, meta=bundle.meta,
    )


def _benchmark_task(args) -> tuple[int, int, dict]:
    design_idx, rep, spec, delta, rep_seed, draws, learners, n_folds, pipelines = args
    try:
        est = _rep_estimates(spec, delta, rep_seed, draws, learners, n_folds, pipelines)
        return design_idx, rep, est
    except Exception as exc:  # a failed rep is recorded, not fatal
        return design_idx, rep, {"__error__": f"{type(exc).__name__}: {exc}"}


@dataclass
class MetricTable:
    """Per-design and aggregate bias / absolute bias / RMSE summaries."""

    design_rows: list[dict] = field(default_factory=list)
    aggregate_rows: list[dict] = field(default_factory=list)
    per_rep: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def pipeline_design_rmse(self, pipeline: str) -> dict[str, float]:
        return {r["design"]: r["rmse"] for r in self.design_rows
                if r["pipeline"] == pipeline}

    def to_text(self) -> str:
        header = f'{"pipeline":<20}{"mean_bias":>12}{"mean_abs_bias":>15}{"rmse":>12}'
        lines = [header, "-" * len(header)]
        for row in self.aggregate_rows:
            lines.append(
                f'{row["pipeline"]:<20}{row["mean_bias"]:>12.4f}'
                f'{row["mean_abs_bias"]:>15.4f}{row["rmse"]:>12.4f}'
            )
        return "\n".join(lines)


def run_benchmark(designs=None, pipelines=None, reps: int = 100, n: int = 1000,
                  seed: int = 0, draws: int = 400, n_folds: int = 5,
                  learners: dict | None = None, threads: int = 1,
                  coef_seed: int = 0, gelbrich_c: float = 0.25,
                  truth_draws: int = 1_000_000) -> MetricTable:
    """Monte Carlo comparison of the pipelines over the simulation designs.

    Per design: one fixed benchmark tilt (efficient direction at
    ``gelbrich_c``), one oracle truth, ``reps`` independent repetitions with
    derived sub-seeds. Failed repetitions are counted, not fatal; aggregation
    is deterministic in (seed, rep index) regardless of ``threads``.
    """
    if reps < 1:
        raise ValueError("need reps >= 1")
    designs = list(designs or DESIGNS)
    pipelines = tuple(pipelines or PIPELINES)
    learners = {**_DEFAULT_LEARNERS, **(learners or {})}
    specs, deltas, truths = [], [], []
    for exposure, outcome in designs:
        spec = DGPSpec(n=n, exposure_scenario=exposure, outcome_scenario=outcome,
                       coef_seed=coef_seed)
        delta = benchmark_delta(spec, c=gelbrich_c, seed=seed + 7)
        _, oracle = generate(replace(spec, n=4), seed=0)
        truth = true_psi(spec, delta, oracle, draws=truth_draws, seed=seed + 23)
        specs.append(spec)
        deltas.append(delta)
        truths.append(truth)
    tasks = []
    for di, spec in enumerate(specs):
        for rep in range(reps):
            rep_seed = int(np.random.SeedSequence((seed, di, rep)).generate_state(1)[0])
            tasks.append((di, rep, spec, deltas[di], rep_seed, draws, learners,
                          n_folds, pipelines))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            raw = list(pool.map(_benchmark_task, tasks, chunksize=1))
    else:
        raw = [_benchmark_task(t) for t in tasks]
    raw.sort(key=lambda r: (r[0], r[1]))  # deterministic reduction order

    table = MetricTable(meta={
        "reps": reps, "n": n, "seed": seed, "draws": draws,
        "gelbrich_c": gelbrich_c, "designs": ["/".join(d) for d in designs],
        "learners": learners, "benchmark_deltas": [d.tolist() for d in deltas],
        "truths": [t.value for t in truths],
        "truth_mc_se": [t.mc_se for t in truths],
    })
    errors: dict[tuple[str, int], list[float]] = {}
    failures: dict[int, int] = {di: 0 for di in range(len(designs))}
    for di, rep, est in raw:
        if "__error__" in est:
            failures[di] += 1
            table.per_rep.append({"design": "/".join(designs[di]), "rep": rep,
                                  "error": est["__error__"]})
            continue
        for name, value in est.items():
            errors.setdefault((name, di), []).append(value - truths[di].value)
            table.per_rep.append({"design": "/".join(designs[di]), "rep": rep,
                                  "pipeline": name, "estimate": value,
                                  "truth": truths[di].value})
    for name in pipelines:
        per_design = []
        for di in range(len(designs)):
            errs = np.asarray(errors.get((name, di), []), dtype=float)
            if errs.size == 0:
                continue
            row = {
                "pipeline": name,
                "design": "/".join(designs[di]),
                "reps_done": int(errs.size),
                "failures": failures[di],
                "bias": float(errs.mean()),
                "abs_bias": float(abs(errs.mean())),
                "rmse": float(np.sqrt(np.mean(errs**2))),
            }
            table.design_rows.append(row)
            per_design.append(row)
        if per_design:
            table.aggregate_rows.append({
                "pipeline": name,
                "mean_bias": float(np.mean([r["bias"] for r in per_design])),
                "mean_abs_bias": float(np.mean([r["abs_bias"] for r in per_design])),
                "rmse": float(np.mean([r["rmse"] for r in per_design])),
            })
    table.meta["failures"] = failures
    return table
