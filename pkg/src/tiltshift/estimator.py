"""Cross-fitted plug-in and one-step estimators of the tilted-mean estimand,
with influence-function based Wald inference.

Estimation paths (how the density ratio r and tilted mean m are formed):

- ``mc_density``        r = exp(d'w) / nu_MC(x),   m = self-normalized MC
- ``ratio_regression``  r = exp(d'w) / nu_reg(x),  m = self-normalized MC
- ``hybrid``            r = exp(d'w) / nu_reg(x),  m = MC numerator / nu_reg(x)
- ``fully_direct``      r = exp(d'w) / nu_reg(x),  m = eta_reg(x) / nu_reg(x)

where nu_MC(x) is the Monte Carlo normalizer from draws of the fitted
exposure density, and nu_reg / eta_reg are cross-fitted regressions of
exp(d'W) and exp(d'W) * mu_hat on X, with nu_reg truncated away from zero.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dataset import Dataset, FoldAssignment, assign_folds, delta_to_raw_scale
from .geometry import NumericError
from .nuisance import (
    ConditionalExposureModel,
    RidgeRegressor,
    fit_exposure_model,
    make_learner,
    sample_conditional_batch,
)

__all__ = [
    "PATHS",
    "TiltVector",
    "NuisanceBundle",
    "EstimateReport",
    "fit_nuisance_bundle",
    "estimate_nu",
    "estimate_eta",
    "density_ratio",
    "tilted_mean",
    "onestep_psi",
    "plugin_psi",
    "theta",
    "joint_covariance",
    "remainder_bound_check",
    "remainder_bound_from_values",
    "TiltEvaluator",
]

PATHS = ("mc_density", "ratio_regression", "hybrid", "fully_direct")
_REG_RATIO_PATHS = ("ratio_regression", "hybrid", "fully_direct")
Z_975 = 1.96
_ESS_WARN = 10.0
_DELTA_MAX_NUMERATOR = 10.0


@dataclass(frozen=True)
class TiltVector:
    """A tilt direction/magnitude with an optional label."""

    delta: np.ndarray
    label: str | None = None

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=float).reshape(-1)
        if not np.all(np.isfinite(delta)):
            raise ValueError("tilt vector must be finite")
        delta.flags.writeable = False
        object.__setattr__(self, "delta", delta)


def _as_delta(delta) -> np.ndarray:
    if isinstance(delta, TiltVector):
        return delta.delta
    return np.asarray(delta, dtype=float).reshape(-1)


def _xw(X: np.ndarray, W: np.ndarray) -> np.ndarray:
    return np.hstack([np.atleast_2d(X), np.atleast_2d(W)])


@dataclass
class NuisanceBundle:
    """Per-fold nuisance models; fold k's models never saw fold k's rows."""

    folds: FoldAssignment
    mu_models: list
    exposure_models: list | None
    delta_max: float
    nu_bounds: tuple[float, float]
    w_norm_max: float
    nu_learner: Callable[[], object] | None = None
    eta_learner: Callable[[], object] | None = None
    nu_log_scale: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def n_folds(self) -> int:
        return self.folds.n_folds

    def check_tilt(self, delta) -> np.ndarray:
        delta = _as_delta(delta)
        norm = float(np.linalg.norm(delta))
        if norm > self.delta_max * (1 + 1e-12):
            raise ValueError(
                f"||delta|| = {norm:.4g} exceeds the finite-tilt guard "
                f"delta_max = {self.delta_max:.4g}; rescale the tilt"
            )
        return delta

    def mu_values(self, d: Dataset) -> np.ndarray:
        """Out-of-fold mu_hat at the observed (X, W), aligned with row order."""
        out = np.empty(d.n)
        for k in range(self.n_folds):
            idx = self.folds.indices(k)
            out[idx] = self.mu_models[k].predict(_xw(d.X[idx], d.W[idx]))
        return out


def fit_nuisance_bundle(
    d: Dataset,
    n_folds: int = 5,
    outcome_learner: dict | Callable | None = None,
    exposure_family: str = "gaussian",
    exposure_mean_learner: dict | Callable | None = None,
    nu_learner: dict | Callable | None = None,
    eta_learner: dict | Callable | None = None,
    nu_log_scale: bool = True,
    fit_exposure: bool = True,
    delta_max: float | None = None,
    seed: int = 0,
) -> NuisanceBundle:
    """Cross-fit the outcome regression and the exposure density model.

    Learners may be given as JSON-style specs (see ``make_learner``) or as
    zero-argument factories. ``fit_exposure=False`` skips the density model
    (enough for the fully_direct path).
    """

    def as_factory(spec, default):
        if spec is None:
            return default
        if callable(spec):
            return spec
        return make_learner(spec)

    outcome_factory = as_factory(outcome_learner, lambda: RidgeRegressor(lam=1e-6, degree=1))
    mean_factory = as_factory(exposure_mean_learner, lambda: RidgeRegressor(lam=1e-6, degree=1))
    folds = assign_folds(d.n, n_folds, seed)
    mu_models, exposure_models = [], []
    for k in range(n_folds):
        tr = folds.train_indices(k)
        mu = outcome_factory()
        if hasattr(mu, "seed"):
            mu.seed = int(np.random.SeedSequence((seed, 1, k)).generate_state(1)[0] % (2**31 - 1))
        mu.fit(_xw(d.X[tr], d.W[tr]), d.Y[tr])
        mu_models.append(mu)
        if fit_exposure:
            sub = Dataset(X=d.X[tr], W=d.W[tr], Y=d.Y[tr])
            exposure_models.append(
                fit_exposure_model(sub, family=exposure_family, mean_learner=mean_factory,
                                   seed=int(np.random.SeedSequence((seed, 2, k)).generate_state(1)[0] % (2**31 - 1)))
            )
    w_norm_max = float(np.linalg.norm(d.W, axis=1).max())
    if delta_max is None:
        delta_max = _DELTA_MAX_NUMERATOR / w_norm_max
    tau = delta_max * w_norm_max
    nu_bounds = (np.exp(-tau) / 2.0, 2.0 * np.exp(tau))
    return NuisanceBundle(
        folds=folds,
        mu_models=mu_models,
        exposure_models=exposure_models if fit_exposure else None,
        delta_max=delta_max,
        nu_bounds=nu_bounds,
        w_norm_max=w_norm_max,
        nu_learner=as_factory(nu_learner, lambda: RidgeRegressor(lam=1e-6, degree=1)),
        eta_learner=as_factory(eta_learner, lambda: RidgeRegressor(lam=1e-6, degree=1)),
        nu_log_scale=nu_log_scale,
        meta={
            "n_folds": n_folds,
            "exposure_family": exposure_family if fit_exposure else None,
            "seed": seed,
        },
    )


# ---------------------------------------------------------------------------
# delta-specific regressions


@dataclass
class TiltRegressions:
    """Per-fold predictions of a delta-specific nuisance on the full dataset."""

    values: np.ndarray  # (n,) out-of-fold predictions, already truncated
    truncated_frac: float = 0.0


def _tilt_targets(delta: np.ndarray, W: np.ndarray) -> np.ndarray:
    s = W @ delta
    if np.max(np.abs(s), initial=0.0) > 700.0:
        raise NumericError("exp(delta'W) overflows; rescale delta")
    return s


def estimate_nu(bundle: NuisanceBundle, d: Dataset, delta) -> TiltRegressions:
    """Cross-fitted regression estimate of nu_delta(x) = E[exp(delta'W) | X=x].

    With ``bundle.nu_log_scale`` the index delta'W is regressed on X and the
    usual half-residual-variance correction is applied; otherwise the
    exponential target is regressed directly. Predictions are truncated to
    ``bundle.nu_bounds``; at delta = 0 the estimate is identically one.
    """
    delta = bundle.check_tilt(delta)
    n = d.n
    if not np.any(delta):
        return TiltRegressions(values=np.ones(n))
    s = _tilt_targets(delta, d.W)
    lo, hi = bundle.nu_bounds
    values = np.empty(n)
    n_trunc = 0
    for k in range(bundle.n_folds):
        tr = bundle.folds.train_indices(k)
        ev = bundle.folds.indices(k)
        model = bundle.nu_learner()
        if bundle.nu_log_scale:
            model.fit(d.X[tr], s[tr])
            resid_var = float(np.mean((s[tr] - model.predict(d.X[tr])) ** 2))
            raw = np.exp(np.clip(model.predict(d.X[ev]) + 0.5 * resid_var, -745.0, 700.0))
        else:
            model.fit(d.X[tr], np.exp(s[tr]))
            raw = model.predict(d.X[ev])
        clipped = np.clip(raw, lo, hi)
        n_trunc += int(np.sum(clipped != raw))
        values[ev] = clipped
    return TiltRegressions(values=values, truncated_frac=n_trunc / n)


def estimate_eta(bundle: NuisanceBundle, d: Dataset, delta) -> TiltRegressions:
    """Cross-fitted regression estimate of eta_delta(x) = E[exp(delta'W) mu | X=x],
    using exp(delta'W_i) * mu_hat(X_i, W_i) as the training target."""
    delta = bundle.check_tilt(delta)
    s = _tilt_targets(delta, d.W)
    values = np.empty(d.n)
    for k in range(bundle.n_folds):
        tr = bundle.folds.train_indices(k)
        ev = bundle.folds.indices(k)
        mu_tr = bundle.mu_models[k].predict(_xw(d.X[tr], d.W[tr]))
        model = bundle.eta_learner()
        model.fit(d.X[tr], np.exp(s[tr]) * mu_tr)
        values[ev] = model.predict(d.X[ev])
    return TiltRegressions(values=values)


# ---------------------------------------------------------------------------
# Monte Carlo components

_BLOCK_BUDGET = 2_000_000  # row-block size * draws capped at ~16 MB per array


def _fold_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence((int(seed), 0x4D43, k)).generate_state(1)[0])


def _mc_components(d: Dataset, bundle: NuisanceBundle, delta: np.ndarray,
                   draws: int, seed: int, mu_offset: float = 0.0):
    """Per-row MC normalizer A, numerator N, and weight ESS from the fitted
    exposure density, using out-of-fold models and per-fold seeds shared
    across deltas (common random numbers)."""
    if bundle.exposure_models is None:
        raise RuntimeError("bundle was fit without exposure models; use path='fully_direct'")
    n = d.n
    A = np.empty(n)
    N = np.empty(n)
    ess = np.empty(n)
    for k in range(bundle.n_folds):
        idx = bundle.folds.indices(k)
        model = bundle.exposure_models[k]
        mu_k = bundle.mu_models[k]
        fold_seed = _fold_seed(seed, k)
        block = max(1, _BLOCK_BUDGET // max(draws, 1))
        for start in range(0, idx.size, block):
            rows = idx[start:start + block]
            V = sample_conditional_batch(model, d.X[rows], draws, fold_seed + start)
            nb, m, q = V.shape
            Xrep = np.repeat(d.X[rows], m, axis=0)
            U = mu_k.predict(_xw(Xrep, V.reshape(nb * m, q))).reshape(nb, m) + mu_offset
            logits = V @ delta
            if np.max(np.abs(logits), initial=0.0) > 700.0:
                raise NumericError("exp(delta'w) overflows in MC draws; rescale delta")
            E = np.exp(logits)
            A[rows] = E.mean(axis=1)
            N[rows] = (E * U).mean(axis=1)
            ess[rows] = E.sum(axis=1) ** 2 / np.maximum((E**2).sum(axis=1), 1e-300)
    return A, N, ess


@dataclass
class EifComponents:
    """Per-observation pieces of the influence function for one tilt."""

    ratio: np.ndarray
    tilted_mean: np.ndarray
    mu_obs: np.ndarray
    min_ess: float
    meta: dict


def eif_components(d: Dataset, bundle: NuisanceBundle, delta, path: str = "mc_density",
                   draws: int = 2000, seed: int = 0,
                   nu: TiltRegressions | None = None,
                   eta: TiltRegressions | None = None,
                   mu_offset: float = 0.0) -> EifComponents:
    """Out-of-fold density ratio and tilted mean for every observation."""
    if path not in PATHS:
        raise ValueError(f"path must be one of {PATHS}")
    delta = bundle.check_tilt(delta)
    t = np.exp(_tilt_targets(delta, d.W))
    needs_mc = path in ("mc_density", "ratio_regression", "hybrid")
    if needs_mc:
        A, N, ess = _mc_components(d, bundle, delta, draws, seed, mu_offset)
        min_ess = float(ess.min())
    else:
        A = N = None
        min_ess = float(draws)
    if path in _REG_RATIO_PATHS:
        if nu is None:
            nu = estimate_nu(bundle, d, delta)
        denom = nu.values
    else:
        denom = A
    ratio = t / denom
    if path == "mc_density" or path == "ratio_regression":
        m_tilde = N / A
    elif path == "hybrid":
        m_tilde = N / nu.values
    else:  # fully_direct
        if eta is None:
            eta = estimate_eta(bundle, d, delta)
        m_tilde = eta.values / nu.values
    meta = {
        "path": path,
        "draws": int(draws) if needs_mc else 0,
        "seed": int(seed),
        "min_ess": min_ess,
        "ess_warning": bool(min_ess < _ESS_WARN),
        "nu_truncated_frac": nu.truncated_frac if nu is not None else 0.0,
    }
    return EifComponents(ratio=ratio, tilted_mean=m_tilde, mu_obs=bundle.mu_values(d),
                         min_ess=min_ess, meta=meta)


def density_ratio(bundle: NuisanceBundle, d: Dataset, delta, path: str = "ratio_regression",
                  draws: int = 2000, seed: int = 0) -> np.ndarray:
    """Out-of-fold density-ratio values g_delta/f at the observed (W, X)."""
    comp = eif_components(d, bundle, delta, path=path, draws=draws, seed=seed)
    return comp.ratio


def tilted_mean(bundle: NuisanceBundle, d: Dataset, delta, path: str = "mc_density",
                draws: int = 2000, seed: int = 0) -> np.ndarray:
    """Out-of-fold tilted conditional means m_delta(X_i)."""
    comp = eif_components(d, bundle, delta, path=path, draws=draws, seed=seed)
    return comp.tilted_mean


# ---------------------------------------------------------------------------
# reports


@dataclass
class EstimateReport:
    """Point estimate, influence values, and Wald inference for one tilt."""

    delta: np.ndarray
    label: str | None
    path: str
    psi_hat: float
    se_psi: float | None
    ci_psi: tuple[float, float] | None
    influence_psi: np.ndarray | None
    theta_hat: float | None = None
    se_theta: float | None = None
    ci_theta: tuple[float, float] | None = None
    influence_theta: np.ndarray | None = None
    ratio_values: np.ndarray | None = None
    mu_values: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return 0 if self.influence_psi is None else self.influence_psi.size

    def to_dict(self, include_arrays: bool = False) -> dict:
        doc = {
            "delta": np.asarray(self.delta, dtype=float).tolist(),
            "label": self.label,
            "path": self.path,
            "psi_hat": self.psi_hat,
            "se_psi": self.se_psi,
            "ci_psi": list(self.ci_psi) if self.ci_psi is not None else None,
            "theta_hat": self.theta_hat,
            "se_theta": self.se_theta,
            "ci_theta": list(self.ci_theta) if self.ci_theta is not None else None,
            "metadata": self.metadata,
        }
        if include_arrays:
            for name in ("influence_psi", "influence_theta", "ratio_values", "mu_values"):
                arr = getattr(self, name)
                doc[name] = None if arr is None else np.asarray(arr).tolist()
        return doc

    def to_json(self, include_arrays: bool = False) -> str:
        return json.dumps(self.to_dict(include_arrays), sort_keys=True)


def _wald(values: np.ndarray):
    psi = float(values.mean())
    phi = values - psi
    se = float(np.sqrt(np.mean(phi**2) / values.size))
    return psi, phi, se, (psi - Z_975 * se, psi + Z_975 * se)


def onestep_psi(d: Dataset, bundle: NuisanceBundle, delta, path: str = "mc_density",
                draws: int = 2000, seed: int = 0,
                nu: TiltRegressions | None = None, eta: TiltRegressions | None = None,
                mu_offset: float = 0.0, label: str | None = None) -> EstimateReport:
    """EIF-corrected one-step estimate of the tilted mean outcome.

    psi_hat = E_n[ r_i (Y_i - m_i) + m_i ]; influence values are the centered
    summands, se is their root mean square over sqrt(n), and the 95% CI is
    the Wald interval. ``mu_offset`` adds a constant to mu_hat everywhere
    (used by robustness diagnostics).
    """
    if isinstance(delta, TiltVector) and label is None:
        label = delta.label
    comp = eif_components(d, bundle, delta, path=path, draws=draws, seed=seed,
                          nu=nu, eta=eta, mu_offset=mu_offset)
    contrib = comp.ratio * (d.Y - comp.tilted_mean) + comp.tilted_mean
    psi, phi, se, ci = _wald(contrib)
    meta = dict(comp.meta)
    meta["estimator"] = "onestep"
    if d.standardization is not None:
        meta["delta_raw_scale"] = delta_to_raw_scale(_as_delta(delta), d.standardization).tolist()
    return EstimateReport(
        delta=_as_delta(delta), label=label, path=path,
        psi_hat=psi, se_psi=se, ci_psi=ci, influence_psi=phi,
        ratio_values=comp.ratio, mu_values=comp.mu_obs, metadata=meta,
    )


def plugin_psi(d: Dataset, bundle: NuisanceBundle, delta, draws: int = 2000,
               seed: int = 0, mu_offset: float = 0.0, label: str | None = None) -> EstimateReport:
    """Plug-in estimate: the empirical average of the MC tilted means.

    No influence-based standard error exists for this estimator; the report
    flags the SE as bootstrap-only and leaves it unset.
    """
    comp = eif_components(d, bundle, delta, path="mc_density", draws=draws,
                          seed=seed, mu_offset=mu_offset)
    psi = float(comp.tilted_mean.mean())
    meta = dict(comp.meta)
    meta.update({"estimator": "plugin", "se": "bootstrap_only_not_provided"})
    return EstimateReport(
        delta=_as_delta(delta), label=label, path="mc_density",
        psi_hat=psi, se_psi=None, ci_psi=None, influence_psi=None,
        metadata=meta,
    )


def theta(d: Dataset, bundle: NuisanceBundle, delta, path: str = "mc_density",
          draws: int = 2000, seed: int = 0,
          nu: TiltRegressions | None = None, eta: TiltRegressions | None = None,
          label: str | None = None) -> EstimateReport:
    """Incremental contrast theta(delta) = psi(delta) - psi(0).

    Both arms share the folds, draws and seed, so theta(0) is exactly zero;
    influence values are the per-observation differences.
    """
    rep_d = onestep_psi(d, bundle, delta, path=path, draws=draws, seed=seed,
                        nu=nu, eta=eta, label=label)
    rep_0 = onestep_psi(d, bundle, np.zeros_like(_as_delta(delta)), path=path,
                        draws=draws, seed=seed)
    th = rep_d.psi_hat - rep_0.psi_hat
    phi = rep_d.influence_psi - rep_0.influence_psi
    se = float(np.sqrt(np.mean(phi**2) / phi.size))
    rep_d.theta_hat = th
    rep_d.se_theta = se
    rep_d.ci_theta = (th - Z_975 * se, th + Z_975 * se)
    rep_d.influence_theta = phi
    rep_d.metadata["psi0_hat"] = rep_0.psi_hat
    return rep_d


def joint_covariance(reports: list[EstimateReport]) -> np.ndarray:
    """Estimated covariance of (theta_hat(delta_1), ..., theta_hat(delta_J)).

    Empirical second-moment matrix of the stacked per-observation influence
    values, divided by n; falls back to psi influence values for reports
    without a theta contrast.
    """
    if not reports:
        raise ValueError("need at least one report")
    cols = []
    for rep in reports:
        phi = rep.influence_theta if rep.influence_theta is not None else rep.influence_psi
        if phi is None:
            raise ValueError("report carries no influence values")
        cols.append(np.asarray(phi, dtype=float))
    n = cols[0].size
    if any(c.size != n for c in cols):
        raise ValueError("reports must share n and observation order")
    Phi = np.column_stack(cols)
    C = (Phi.T @ Phi) / (n * n)
    return (C + C.T) / 2.0


def remainder_bound_from_values(r_hat, m_hat, r_true, m_true) -> tuple[float, float]:
    """Empirical second-order remainder and its Cauchy-Schwarz bound.

    lhs = |E_n[(r_hat - r)(m_hat - m)]|, rhs = ||r_hat - r||_2 ||m_hat - m||_2
    under the empirical measure.
    """
    dr = np.asarray(r_hat, dtype=float) - np.asarray(r_true, dtype=float)
    dm = np.asarray(m_hat, dtype=float) - np.asarray(m_true, dtype=float)
    lhs = abs(float(np.mean(dr * dm)))
    rhs = float(np.sqrt(np.mean(dr**2)) * np.sqrt(np.mean(dm**2)))
    return lhs, rhs


def remainder_bound_check(d: Dataset, bundle_oracle: NuisanceBundle,
                          bundle_hat: NuisanceBundle, delta,
                          path: str = "mc_density", draws: int = 2000,
                          seed: int = 0) -> tuple[float, float]:
    """Evaluate both bundles' (r, m) on the sample and return (lhs, rhs) of
    the second-order remainder inequality."""
    oracle = eif_components(d, bundle_oracle, delta, path=path, draws=draws, seed=seed)
    hat = eif_components(d, bundle_hat, delta, path=path, draws=draws, seed=seed)
    return remainder_bound_from_values(hat.ratio, hat.tilted_mean,
                                       oracle.ratio, oracle.tilted_mean)


# ---------------------------------------------------------------------------
# frozen evaluator for optimization and curves


class TiltEvaluator:
    """Caches exposure draws and mu_hat evaluations so that psi_hat(delta)
    can be evaluated repeatedly (optimizer, target grids) with common random
    numbers and no per-delta refitting on the mc_density path."""

    def __init__(self, d: Dataset, bundle: NuisanceBundle, draws: int = 500, seed: int = 0):
        if bundle.exposure_models is None:
            raise RuntimeError("TiltEvaluator needs exposure models in the bundle")
        self.d = d
        self.bundle = bundle
        self.draws = int(draws)
        self.seed = int(seed)
        n = d.n
        self.V = np.empty((n, draws, d.q))
        self.U = np.empty((n, draws))
        for k in range(bundle.n_folds):
            idx = bundle.folds.indices(k)
            model = bundle.exposure_models[k]
            mu_k = bundle.mu_models[k]
            fold_seed = _fold_seed(seed, k)
            block = max(1, _BLOCK_BUDGET // max(draws, 1))
            for start in range(0, idx.size, block):
                rows = idx[start:start + block]
                V = sample_conditional_batch(model, d.X[rows], draws, fold_seed + start)
                nb, m, q = V.shape
                Xrep = np.repeat(d.X[rows], m, axis=0)
                self.V[rows] = V
                self.U[rows] = mu_k.predict(_xw(Xrep, V.reshape(nb * m, q))).reshape(nb, m)
        self.mu_obs = bundle.mu_values(d)

    def components(self, delta, nu_values: np.ndarray | None = None,
                   path: str = "mc_density"):
        delta = self.bundle.check_tilt(delta)
        logits = self.V @ delta
        if np.max(np.abs(logits), initial=0.0) > 700.0:
            raise NumericError("exp(delta'w) overflows in cached draws; rescale delta")
        E = np.exp(logits)
        A = E.mean(axis=1)
        N = (E * self.U).mean(axis=1)
        t = np.exp(_tilt_targets(delta, self.d.W))
        if path == "mc_density":
            ratio = t / A
            m_tilde = N / A
        elif path == "ratio_regression":
            ratio = t / nu_values
            m_tilde = N / A
        elif path == "hybrid":
            ratio = t / nu_values
            m_tilde = N / nu_values
        else:
            raise ValueError("cached evaluator supports mc_density, ratio_regression, hybrid")
        return ratio, m_tilde

    def psi_onestep(self, delta, nu_values: np.ndarray | None = None,
                    path: str = "mc_density") -> float:
        ratio, m_tilde = self.components(delta, nu_values, path)
        return float(np.mean(ratio * (self.d.Y - m_tilde) + m_tilde))

    def psi_plugin(self, delta) -> float:
        _, m_tilde = self.components(delta)
        return float(np.mean(m_tilde))

    def objective(self, path: str = "mc_density") -> Callable[[np.ndarray], float]:
        """Zero-argument-state objective delta -> one-step psi_hat for the
        optimizer; deterministic by construction."""
        def fn(delta):
            return self.psi_onestep(delta, path=path)
        return fn
