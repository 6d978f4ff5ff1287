"""Baseline supervised learners and the location-shift conditional exposure
density model (three residual families joined by a Gaussian copula).

The model is W_j = m_j(X) + sigma_j * eps_j with homoscedastic scales; the
standardized residuals get a marginal law per family and their joint
dependence comes from a Gaussian copula, which supports exact sampling and
log-density evaluation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np
from scipy import special, stats
from sklearn.tree import DecisionTreeRegressor

from .dataset import Dataset
from .geometry import NumericError

__all__ = [
    "Regressor",
    "RidgeRegressor",
    "GradientBoostedTrees",
    "FunctionRegressor",
    "make_learner",
    "fit_ridge",
    "fit_gbt",
    "ConditionalExposureModel",
    "fit_exposure_model",
    "log_density",
    "sample_conditional",
    "sample_conditional_batch",
    "model_to_json",
    "model_from_json",
]

LOG_FLOOR = -745.0  # smallest log a float64 exp() survives; never -inf/NaN


class Regressor(Protocol):
    def fit(self, X: np.ndarray, y: np.ndarray) -> "Regressor": ...
    def predict(self, X: np.ndarray) -> np.ndarray: ...


# ---------------------------------------------------------------------------
# learners


def _poly_expand(X: np.ndarray, degree: int) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if degree == 1:
        return X
    cols = [X]
    cols.append(X**2)
    p = X.shape[1]
    for i in range(p):
        for j in range(i + 1, p):
            cols.append((X[:, i] * X[:, j])[:, None])
    return np.hstack(cols)


class RidgeRegressor:
    """Ridge regression on raw or degree-2 polynomial features.

    Closed-form normal equations with an unpenalized intercept. ``lam=0`` on
    a singular system raises :class:`NumericError` advising ``lam > 0``.
    """

    def __init__(self, lam: float = 1e-6, degree: int = 1):
        if lam < 0:
            raise ValueError("lam must be nonnegative")
        if degree not in (1, 2):
            raise ValueError("degree must be 1 or 2")
        self.lam = float(lam)
        self.degree = int(degree)
        self.coef_: np.ndarray | None = None
        self.intercept_: float = 0.0
        self._x_mean: np.ndarray | None = None
        self._x_scale: np.ndarray | None = None

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RidgeRegressor":
        Z = _poly_expand(X, self.degree)
        y = np.asarray(y, dtype=float).reshape(-1)
        self._x_mean = Z.mean(axis=0)
        scale = Z.std(axis=0)
        scale[scale == 0] = 1.0
        self._x_scale = scale
        Zs = (Z - self._x_mean) / self._x_scale
        yc = y - y.mean()
        A = Zs.T @ Zs + self.lam * np.eye(Zs.shape[1])
        b = Zs.T @ yc
        if self.lam == 0.0:
            cond = np.linalg.cond(A)
            if not np.isfinite(cond) or cond > 1e12:
                raise NumericError("singular system at lam=0; use lam > 0")
        try:
            coef = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as exc:
            raise NumericError("singular system at lam=0; use lam > 0") from exc
        self.coef_ = coef
        self.intercept_ = float(y.mean())
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        if self.coef_ is None:
            raise RuntimeError("predict before fit")
        Z = _poly_expand(X, self.degree)
        return (Z - self._x_mean) / self._x_scale @ self.coef_ + self.intercept_

    def to_config(self) -> dict:
        return {
            "kind": "ridge",
            "lam": self.lam,
            "degree": self.degree,
            "coef": None if self.coef_ is None else self.coef_.tolist(),
            "intercept": self.intercept_,
            "x_mean": None if self._x_mean is None else self._x_mean.tolist(),
            "x_scale": None if self._x_scale is None else self._x_scale.tolist(),
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "RidgeRegressor":
        out = cls(lam=cfg["lam"], degree=cfg["degree"])
        if cfg["coef"] is not None:
            out.coef_ = np.asarray(cfg["coef"], dtype=float)
            out.intercept_ = float(cfg["intercept"])
            out._x_mean = np.asarray(cfg["x_mean"], dtype=float)
            out._x_scale = np.asarray(cfg["x_scale"], dtype=float)
        return out


class _ArrayTree:
    """Flat-array regression tree reconstructed from serialized nodes."""

    def __init__(self, children_left, children_right, feature, threshold, value):
        self.children_left = np.asarray(children_left, dtype=np.int64)
        self.children_right = np.asarray(children_right, dtype=np.int64)
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.value = np.asarray(value, dtype=float)

    @classmethod
    def from_sklearn(cls, tree) -> "_ArrayTree":
        t = tree.tree_
        return cls(
            t.children_left, t.children_right, t.feature, t.threshold,
            t.value.reshape(-1),
        )

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.children_left[node] >= 0
        while np.any(active):
            idx = np.flatnonzero(active)
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.children_left[cur], self.children_right[cur])
            active[idx] = self.children_left[node[idx]] >= 0
        return self.value[node]

    def to_arrays(self) -> dict:
        return {
            "children_left": self.children_left.tolist(),
            "children_right": self.children_right.tolist(),
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "value": self.value.tolist(),
        }


class GradientBoostedTrees:
    """Least-squares gradient boosting with shallow regression trees.

    Plain residual boosting: f_0 = mean(y), then ``n_trees`` trees of depth
    ``depth`` fit to residuals and added with the learning ``rate``.
    Deterministic given the seed.
    """

    def __init__(self, n_trees: int = 150, depth: int = 2, rate: float = 0.1,
                 seed: int = 0, min_samples_leaf: int = 5):
        if n_trees < 1 or depth < 1:
            raise ValueError("need n_trees >= 1 and depth >= 1")
        if not 0 < rate <= 1:
            raise ValueError("need 0 < rate <= 1")
        self.n_trees = int(n_trees)
        self.depth = int(depth)
        self.rate = float(rate)
        self.seed = int(seed)
        self.min_samples_leaf = int(min_samples_leaf)
        self.init_: float = 0.0
        self.trees_: list = []

    def fit(self, X: np.ndarray, y: np.ndarray) -> "GradientBoostedTrees":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.size < 2:
            raise ValueError("need at least two observations")
        self.init_ = float(y.mean())
        pred = np.full(y.shape, self.init_)
        self.trees_ = []
        rng = np.random.default_rng(np.random.SeedSequence((self.seed, 0x67627400)))
        for _ in range(self.n_trees):
            tree = DecisionTreeRegressor(
                max_depth=self.depth,
                min_samples_leaf=self.min_samples_leaf,
                random_state=int(rng.integers(2**31 - 1)),
            )
            tree.fit(X, y - pred)
            step = tree.predict(X)
            pred += self.rate * step
            self.trees_.append(tree)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(X.shape[0], self.init_)
        for tree in self.trees_:
            out += self.rate * tree.predict(X)
        return out

    def to_config(self) -> dict:
        trees = []
        for tree in self.trees_:
            at = tree if isinstance(tree, _ArrayTree) else _ArrayTree.from_sklearn(tree)
            trees.append(at.to_arrays())
        return {
            "kind": "gbt",
            "n_trees": self.n_trees,
            "depth": self.depth,
            "rate": self.rate,
            "seed": self.seed,
            "min_samples_leaf": self.min_samples_leaf,
            "init": self.init_,
            "trees": trees,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "GradientBoostedTrees":
        out = cls(cfg["n_trees"], cfg["depth"], cfg["rate"], cfg["seed"],
                  cfg["min_samples_leaf"])
        out.init_ = float(cfg["init"])
        out.trees_ = [_ArrayTree(**t) for t in cfg["trees"]]
        return out


class FunctionRegressor:
    """Wraps a plain callable as a fitted regressor (oracle injection)."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray]):
        self.fn = fn

    def fit(self, X, y):  # already "fitted"
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(np.atleast_2d(np.asarray(X, dtype=float))), dtype=float).reshape(-1)


def make_learner(spec: dict) -> Callable[[], Regressor]:
    """Factory from a JSON-style learner spec, e.g. {"kind": "gbt", "depth": 2}."""
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "ridge":
        return lambda: RidgeRegressor(**spec)
    if kind == "gbt":
        return lambda: GradientBoostedTrees(**spec)
    raise ValueError(f"unknown learner kind {kind!r}")


def fit_ridge(X, y, lam: float, degree: int = 1) -> RidgeRegressor:
    return RidgeRegressor(lam=lam, degree=degree).fit(X, y)


def fit_gbt(X, y, n_trees: int, depth: int, rate: float, seed: int) -> GradientBoostedTrees:
    return GradientBoostedTrees(n_trees=n_trees, depth=depth, rate=rate, seed=seed).fit(X, y)


# ---------------------------------------------------------------------------
# residual marginals

_U_EPS = 1e-12


class _GaussianMarginal:
    family = "gaussian"

    def logpdf(self, z):
        z = np.asarray(z, dtype=float)
        return -0.5 * z**2 - 0.5 * math.log(2.0 * math.pi)

    def cdf(self, z):
        return special.ndtr(np.asarray(z, dtype=float))

    def ppf(self, u):
        return special.ndtri(np.clip(np.asarray(u, dtype=float), _U_EPS, 1 - _U_EPS))

    def to_config(self):
        return {"family": "gaussian"}


class _StudentTMarginal:
    """Unit-variance scaled t: scale tied to sqrt((df-2)/df), df fit by MLE."""

    family = "student_t"

    def __init__(self, df: float):
        if df <= 2.0:
            raise ValueError("df must exceed 2 for a finite variance")
        self.df = float(df)
        self.scale = math.sqrt((self.df - 2.0) / self.df)

    @classmethod
    def fit(cls, eps: np.ndarray, lo: float = 2.1, hi: float = 100.0) -> "_StudentTMarginal":
        # golden-section maximization of the profile log-likelihood over df
        eps = np.asarray(eps, dtype=float)

        def nll(df):
            s = math.sqrt((df - 2.0) / df)
            return -np.sum(stats.t.logpdf(eps, df, scale=s))

        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c1 = b - invphi * (b - a)
        c2 = a + invphi * (b - a)
        f1, f2 = nll(c1), nll(c2)
        for _ in range(60):
            if f1 < f2:
                b, c2, f2 = c2, c1, f1
                c1 = b - invphi * (b - a)
                f1 = nll(c1)
            else:
                a, c1, f1 = c1, c2, f2
                c2 = a + invphi * (b - a)
                f2 = nll(c2)
            if b - a < 1e-4:
                break
        return cls((a + b) / 2.0)

    def logpdf(self, z):
        return stats.t.logpdf(np.asarray(z, dtype=float), self.df, scale=self.scale)

    def cdf(self, z):
        return stats.t.cdf(np.asarray(z, dtype=float), self.df, scale=self.scale)

    def ppf(self, u):
        u = np.clip(np.asarray(u, dtype=float), _U_EPS, 1 - _U_EPS)
        return stats.t.ppf(u, self.df, scale=self.scale)

    def to_config(self):
        return {"family": "student_t", "df": self.df}


class _EmpiricalMarginal:
    """Gaussian-kernel density on the residual sample, Silverman bandwidth.

    The pdf/cdf are tabulated on a fine grid spanning the sample plus five
    bandwidths and evaluated by interpolation; the smoothed cdf is strictly
    increasing, so the quantile function is its monotone inverse.
    """

    family = "empirical"
    _GRID = 4096

    def __init__(self, sample: np.ndarray):
        z = np.sort(np.asarray(sample, dtype=float))
        n = z.size
        sd = z.std(ddof=1)
        iqr = np.subtract(*np.percentile(z, [75, 25]))
        a = min(sd, iqr / 1.349) if iqr > 0 else sd
        self.bandwidth = max(0.9 * a * n ** (-0.2), 1e-3)
        self.sample = z
        lo = z[0] - 5.0 * self.bandwidth
        hi = z[-1] + 5.0 * self.bandwidth
        grid = np.linspace(lo, hi, self._GRID)
        diff = (grid[:, None] - z[None, :]) / self.bandwidth
        self.grid = grid
        self.grid_logpdf = (
            special.logsumexp(-0.5 * diff**2, axis=1)
            - math.log(n * self.bandwidth * math.sqrt(2.0 * math.pi))
        )
        self.grid_cdf = special.ndtr(diff).mean(axis=1)

    def logpdf(self, z):
        z = np.asarray(z, dtype=float)
        out = np.interp(z, self.grid, self.grid_logpdf, left=LOG_FLOOR, right=LOG_FLOOR)
        return np.maximum(out, LOG_FLOOR)

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        return np.clip(np.interp(z, self.grid, self.grid_cdf), _U_EPS, 1 - _U_EPS)

    def ppf(self, u):
        u = np.clip(np.asarray(u, dtype=float), self.grid_cdf[0], self.grid_cdf[-1])
        return np.interp(u, self.grid_cdf, self.grid)

    def to_config(self):
        return {"family": "empirical", "sample": self.sample.tolist()}


def _marginal_from_config(cfg: dict):
    fam = cfg["family"]
    if fam == "gaussian":
        return _GaussianMarginal()
    if fam == "student_t":
        return _StudentTMarginal(cfg["df"])
    if fam == "empirical":
        return _EmpiricalMarginal(np.asarray(cfg["sample"], dtype=float))
    raise ValueError(f"unknown marginal family {fam!r}")


# ---------------------------------------------------------------------------
# conditional exposure model


def _spearman_corr(E: np.ndarray) -> np.ndarray:
    n, q = E.shape
    ranks = np.empty_like(E)
    for j in range(q):
        ranks[:, j] = stats.rankdata(E[:, j])
    ranks = (ranks - ranks.mean(axis=0)) / ranks.std(axis=0)
    return (ranks.T @ ranks) / n


@dataclass
class ConditionalExposureModel:
    """Location-shift model of W | X with Gaussian-copula residual dependence."""

    mean_models: list
    mean_offsets: np.ndarray
    scales: np.ndarray
    marginals: list
    family: str
    copula_corr: np.ndarray
    copula_shrinkage: float = 0.0
    _chol: np.ndarray | None = field(default=None, repr=False)
    _inv: np.ndarray | None = field(default=None, repr=False)
    _logdet: float = field(default=0.0, repr=False)

    def __post_init__(self):
        R = np.asarray(self.copula_corr, dtype=float)
        self.copula_corr = (R + R.T) / 2.0
        self._chol = np.linalg.cholesky(self.copula_corr)
        self._inv = np.linalg.inv(self.copula_corr)
        sign, logdet = np.linalg.slogdet(self.copula_corr)
        if sign <= 0:
            raise NumericError("copula correlation must be positive definite")
        self._logdet = logdet
        self.scales = np.asarray(self.scales, dtype=float)
        self.mean_offsets = np.asarray(self.mean_offsets, dtype=float)

    @property
    def q(self) -> int:
        return len(self.mean_models)

    def conditional_mean(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.column_stack(
            [m.predict(X) + off for m, off in zip(self.mean_models, self.mean_offsets)]
        )

    @classmethod
    def from_gaussian(cls, mean_fns, Sigma: np.ndarray) -> "ConditionalExposureModel":
        """Oracle constructor: known per-coordinate mean functions and a known
        residual covariance; gaussian marginals + copula reproduce N(m(x), Sigma)."""
        Sigma = np.asarray(Sigma, dtype=float)
        scales = np.sqrt(np.diag(Sigma))
        R = Sigma / np.outer(scales, scales)
        models = [fn if hasattr(fn, "predict") else FunctionRegressor(fn) for fn in mean_fns]
        return cls(
            mean_models=models,
            mean_offsets=np.zeros(len(models)),
            scales=scales,
            marginals=[_GaussianMarginal() for _ in models],
            family="gaussian",
            copula_corr=R,
        )


def fit_location(d: Dataset, mean_learner: Callable[[], Regressor], seed: int = 0):
    """Fit the q conditional-mean regressions and homoscedastic scales.

    Returns (mean_models, offsets, scales, standardized residuals); shared by
    the three residual families so they can be fit on the same location fit.
    """
    models, offsets, scales = [], np.zeros(d.q), np.zeros(d.q)
    eps = np.empty_like(d.W)
    for j in range(d.q):
        m = mean_learner()
        if hasattr(m, "seed"):
            m.seed = int(np.random.SeedSequence((seed, j)).generate_state(1)[0] % (2**31 - 1))
        m.fit(d.X, d.W[:, j])
        resid = d.W[:, j] - m.predict(d.X)
        offsets[j] = resid.mean()
        resid = resid - offsets[j]
        s = resid.std(ddof=1)
        if not np.isfinite(s) or s <= 0:
            raise NumericError(f"residual scale for exposure {j} is zero")
        scales[j] = s
        eps[:, j] = resid / s
        models.append(m)
    return models, offsets, scales, eps


def fit_residual_family(eps: np.ndarray, family: str):
    """Fit per-coordinate marginals and the copula correlation on residuals."""
    q = eps.shape[1]
    if family == "gaussian":
        marginals = [_GaussianMarginal() for _ in range(q)]
    elif family == "student_t":
        marginals = [_StudentTMarginal.fit(eps[:, j]) for j in range(q)]
    elif family == "empirical":
        marginals = [_EmpiricalMarginal(eps[:, j]) for j in range(q)]
    else:
        raise ValueError(f"unknown residual family {family!r}")
    if q == 1:
        return marginals, np.eye(1), 0.0
    rho_s = _spearman_corr(eps)
    R = 2.0 * np.sin(np.pi * rho_s / 6.0)
    np.fill_diagonal(R, 1.0)
    shrink = 0.0
    while shrink <= 1.0:
        Rs = (1.0 - shrink) * R + shrink * np.eye(q)
        if np.linalg.eigvalsh(Rs).min() > 1e-8:
            break
        shrink += 0.05
    else:
        raise NumericError("copula correlation could not be shrunk to positive definite")
    return marginals, Rs, shrink


def fit_exposure_model(
    d: Dataset,
    family: str = "gaussian",
    mean_learner: Callable[[], Regressor] | None = None,
    seed: int = 0,
) -> ConditionalExposureModel:
    """Fit the location-shift exposure model on a dataset.

    ``mean_learner`` is a zero-argument factory returning a fresh regressor
    per coordinate (defaults to linear ridge).
    """
    if d.n <= d.q + 2:
        raise ValueError("need n > q + 2 observations to fit the exposure model")
    if mean_learner is None:
        mean_learner = lambda: RidgeRegressor(lam=1e-6, degree=1)
    models, offsets, scales, eps = fit_location(d, mean_learner, seed)
    marginals, R, shrink = fit_residual_family(eps, family)
    return ConditionalExposureModel(
        mean_models=models,
        mean_offsets=offsets,
        scales=scales,
        marginals=marginals,
        family=family,
        copula_corr=R,
        copula_shrinkage=shrink,
    )


def log_density(model: ConditionalExposureModel, w: np.ndarray, x: np.ndarray) -> float:
    """log f_hat(w | x); floored at -745 per coordinate, never -inf or NaN."""
    w = np.asarray(w, dtype=float).reshape(1, -1)
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return float(log_density_batch(model, w, x)[0])


def log_density_batch(model: ConditionalExposureModel, W: np.ndarray, X: np.ndarray) -> np.ndarray:
    W = np.atleast_2d(np.asarray(W, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    mean = model.conditional_mean(X)
    Z = (W - mean) / model.scales
    q = model.q
    logpdf = np.zeros(W.shape[0])
    G = np.empty_like(Z)
    for j in range(q):
        marg = model.marginals[j]
        logpdf += np.maximum(marg.logpdf(Z[:, j]), LOG_FLOOR)
        if isinstance(marg, _GaussianMarginal):
            G[:, j] = Z[:, j]
        else:
            G[:, j] = special.ndtri(np.clip(marg.cdf(Z[:, j]), _U_EPS, 1 - _U_EPS))
    A = model._inv - np.eye(q)
    copula = -0.5 * model._logdet - 0.5 * np.einsum("nq,qr,nr->n", G, A, G)
    out = logpdf - np.log(model.scales).sum() + copula
    return np.maximum(out, LOG_FLOOR)


def sample_conditional(model: ConditionalExposureModel, x: np.ndarray, m: int, seed: int) -> np.ndarray:
    """Draw m exposures from f_hat(. | x); returns an (m, q) matrix."""
    if m < 1:
        raise ValueError("need m >= 1 draws")
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return sample_conditional_batch(model, x, m, seed)[0]


def sample_conditional_batch(
    model: ConditionalExposureModel, X: np.ndarray, m: int, seed: int
) -> np.ndarray:
    """Draw m exposures per covariate row; returns (n, m, q).

    Copula scores -> marginal quantiles -> location/scale. The draw stream
    depends only on (seed, n, m, q), not on the tilt, so callers get common
    random numbers across deltas for free.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    q = model.q
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), n, m, q)))
    G = rng.standard_normal((n, m, q)) @ model._chol.T
    Z = np.empty_like(G)
    for j in range(q):
        marg = model.marginals[j]
        if isinstance(marg, _GaussianMarginal):
            Z[:, :, j] = G[:, :, j]
        else:
            Z[:, :, j] = marg.ppf(special.ndtr(G[:, :, j]))
    mean = model.conditional_mean(X)
    return mean[:, None, :] + Z * model.scales[None, None, :]


# ---------------------------------------------------------------------------
# serialization

_FORMAT_VERSION = 1


def _regressor_to_config(m) -> dict:
    if hasattr(m, "to_config"):
        return m.to_config()
    raise TypeError(f"regressor {type(m).__name__} is not serializable")


def _regressor_from_config(cfg: dict):
    if cfg["kind"] == "ridge":
        return RidgeRegressor.from_config(cfg)
    if cfg["kind"] == "gbt":
        return GradientBoostedTrees.from_config(cfg)
    raise ValueError(f"unknown regressor kind {cfg['kind']!r}")


def model_to_json(model: ConditionalExposureModel) -> str:
    doc = {
        "format_version": _FORMAT_VERSION,
        "family": model.family,
        "mean_models": [_regressor_to_config(m) for m in model.mean_models],
        "mean_offsets": model.mean_offsets.tolist(),
        "scales": model.scales.tolist(),
        "marginals": [m.to_config() for m in model.marginals],
        "copula_corr": model.copula_corr.tolist(),
        "copula_shrinkage": model.copula_shrinkage,
    }
    return json.dumps(doc, sort_keys=True)


def model_from_json(text: str) -> ConditionalExposureModel:
    doc = json.loads(text)
    if doc.get("format_version") != _FORMAT_VERSION:
        raise ValueError(f"unsupported exposure-model format {doc.get('format_version')!r}")
    return ConditionalExposureModel(
        mean_models=[_regressor_from_config(c) for c in doc["mean_models"]],
        mean_offsets=np.asarray(doc["mean_offsets"], dtype=float),
        scales=np.asarray(doc["scales"], dtype=float),
        marginals=[_marginal_from_config(c) for c in doc["marginals"]],
        family=doc["family"],
        copula_corr=np.asarray(doc["copula_corr"], dtype=float),
        copula_shrinkage=doc["copula_shrinkage"],
    )
