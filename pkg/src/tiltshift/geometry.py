"""Gaussian closed forms, the Gelbrich moment distance, and the empirical
tilt-size constraint G(delta) with its finite-difference gradient.

The constraint evaluator caches one set of Monte Carlo draws per covariate
row and reuses them for every delta (common random numbers), so G is a
smooth deterministic function of delta given the seed.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset

__all__ = [
    "NumericError",
    "SpectrumTieWarning",
    "MomentPair",
    "ConstraintSpec",
    "sqrtm_psd",
    "gelbrich_sq",
    "tilted_normal_moments",
    "ratio_variance_normal",
    "efficient_direction",
    "single_exposure_direction",
    "GelbrichConstraint",
    "gelbrich_constraint_G",
    "grad_G",
]


class NumericError(RuntimeError):
    """A linear-algebra or overflow failure with a remediation hint."""


class SpectrumTieWarning(UserWarning):
    """The leading eigenvalue is degenerate; a canonical direction was chosen."""


_SYM_TOL = 1e-10
_EIG_FLOOR = -1e-10


def sqrtm_psd(A: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix via eigendecomposition.

    Eigenvalues in [-1e-10, 0) are clipped to zero; anything more negative
    means the input is genuinely indefinite and raises :class:`NumericError`.
    """
    A = np.asarray(A, dtype=float)
    vals, vecs = np.linalg.eigh((A + A.T) / 2.0)
    if vals.min(initial=0.0) < _EIG_FLOOR * max(1.0, abs(vals).max(initial=1.0)):
        raise NumericError(
            f"matrix square root needs a PSD input (min eigenvalue {vals.min():.3e})"
        )
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


@dataclass(frozen=True)
class MomentPair:
    """Mean vector and PSD covariance of one law of the exposures."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ValueError("cov must be q x q for a q-vector mean")
        scale = max(1.0, np.abs(cov).max(initial=1.0))
        if np.abs(cov - cov.T).max(initial=0.0) > _SYM_TOL * scale:
            raise ValueError("covariance is not symmetric within 1e-10")
        cov = (cov + cov.T) / 2.0
        vals = np.linalg.eigvalsh(cov)
        if vals.min(initial=0.0) < _EIG_FLOOR * scale:
            raise ValueError(f"covariance has eigenvalue {vals.min():.3e} < -1e-10")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class ConstraintSpec:
    """Settings for the Monte Carlo evaluation of G(delta)."""

    c: float
    mc_draws: int = 50_000
    fd_step: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("constraint radius c must be positive")
        if self.mc_draws < 1000:
            raise ValueError("mc_draws must be at least 1000")
        if not self.fd_step > 0:
            raise ValueError("fd_step must be positive")


def gelbrich_sq(a: MomentPair, b: MomentPair) -> float:
    """Squared Gelbrich distance between two moment pairs.

    ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1^{1/2} S2 S1^{1/2})^{1/2}); a lower
    bound on the squared 2-Wasserstein distance, exact for two Gaussians.
    """
    if a.dim != b.dim:
        raise ValueError("moment pairs have different dimensions")
    root_a = sqrtm_psd(a.cov)
    cross = sqrtm_psd(root_a @ b.cov @ root_a)
    val = float(
        np.sum((a.mean - b.mean) ** 2)
        + np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.trace(cross)
    )
    return max(val, 0.0)


def tilted_normal_moments(mu: np.ndarray, Sigma: np.ndarray, delta: np.ndarray) -> MomentPair:
    """Moments of exp(delta'w)-tilted N(mu, Sigma): mean shifts by Sigma @ delta."""
    mu = np.asarray(mu, dtype=float).reshape(-1)
    delta = np.asarray(delta, dtype=float).reshape(-1)
    Sigma = np.asarray(Sigma, dtype=float)
    if mu.size != delta.size or Sigma.shape != (mu.size, mu.size):
        raise ValueError("dimension mismatch between mu, Sigma and delta")
    return MomentPair(mean=mu + Sigma @ delta, cov=Sigma)


def ratio_variance_normal(Sigma: np.ndarray, delta: np.ndarray) -> float:
    """Variance of the tilted/baseline density ratio under N(mu, Sigma):
    exp(delta' Sigma delta) - 1."""
    delta = np.asarray(delta, dtype=float).reshape(-1)
    Sigma = np.asarray(Sigma, dtype=float)
    if Sigma.shape != (delta.size, delta.size):
        raise ValueError("dimension mismatch between Sigma and delta")
    return float(np.exp(delta @ Sigma @ delta) - 1.0)


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    if nz.size and v[nz[0]] < 0:
        return -v
    return v


def efficient_direction(Sigma: np.ndarray, c: float, tie_tol: float = 1e-8) -> np.ndarray:
    """Tilt direction minimizing the density-ratio variance at fixed size.

    Returns s * v1 with v1 the top eigenvector of Sigma and s > 0 chosen so
    that delta' Sigma^2 delta = c^2 (i.e. s = c / lambda_max). A degenerate
    leading eigenvalue triggers :class:`SpectrumTieWarning` and the
    canonically signed direction closest to the first standard basis vectors.
    """
    Sigma = np.asarray(Sigma, dtype=float)
    vals, vecs = np.linalg.eigh((Sigma + Sigma.T) / 2.0)
    lam_max = vals[-1]
    if lam_max <= 0:
        raise NumericError("efficient direction needs lambda_max > 0")
    tied = vals >= lam_max - tie_tol * max(1.0, abs(lam_max))
    if tied.sum() > 1:
        warnings.warn(
            f"leading eigenvalue is degenerate (multiplicity {int(tied.sum())}); "
            "returning the canonical direction",
            SpectrumTieWarning,
            stacklevel=2,
        )
        basis = vecs[:, tied]
        v = None
        for j in range(Sigma.shape[0]):
            proj = basis @ basis[j, :]
            if np.linalg.norm(proj) > 1e-8:
                v = proj / np.linalg.norm(proj)
                break
        if v is None:  # cannot happen for an orthonormal basis
            v = basis[:, 0]
    else:
        v = vecs[:, -1]
    v = _canonical_sign(v)
    return (c / lam_max) * v


def single_exposure_direction(Sigma: np.ndarray, j: int, c: float) -> np.ndarray:
    """Tilt c * Sigma^{-1} e_j: under normality the tilted mean moves by c
    in coordinate j only."""
    Sigma = np.asarray(Sigma, dtype=float)
    q = Sigma.shape[0]
    if not 0 <= j < q:
        raise ValueError(f"exposure index {j} out of range for q={q}")
    e = np.zeros(q)
    e[j] = 1.0
    try:
        x = np.linalg.solve(Sigma, e)
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            "covariance is singular; consider adding a small ridge before inverting"
        ) from exc
    return c * x


class GelbrichConstraint:
    """Monte Carlo estimate of the squared Gelbrich distance between the
    baseline and tilted marginal exposure laws, as a function of delta.

    Draws from the fitted conditional exposure model are generated once per
    covariate row and cached; every delta reuses them, so evaluations share
    common random numbers and finite differences are smooth. The baseline
    moments are the cached draws' own moments at delta = 0, making
    ``value(0) == 0`` exactly.
    """

    def __init__(self, model, X: np.ndarray, spec: ConstraintSpec):
        from .nuisance import sample_conditional_batch  # local to avoid a cycle

        self.spec = spec
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[0]
        m = max(2, int(np.ceil(spec.mc_draws / n)))
        self.draws = sample_conditional_batch(model, X, m, spec.seed)  # (n, m, q)
        self.n_rows, self.m_per_row, self.q = self.draws.shape
        self._baseline = self._moments(np.zeros(self.q))

    @classmethod
    def from_dataset(cls, model, baseline: Dataset, spec: ConstraintSpec) -> "GelbrichConstraint":
        return cls(model, baseline.X, spec)

    def _moments(self, delta: np.ndarray) -> MomentPair:
        delta = np.asarray(delta, dtype=float).reshape(-1)
        if delta.size != self.q:
            raise ValueError(f"delta must have length {self.q}")
        logits = self.draws @ delta  # (n, m)
        if np.max(logits) - np.min(logits) > 700.0 or np.max(np.abs(logits)) > 700.0:
            raise NumericError(
                "importance weights overflow/underflow; use a smaller tilt delta"
            )
        w = np.exp(logits - logits.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        mu_rows = np.einsum("nm,nmq->nq", w, self.draws)  # conditional tilted means
        centered = self.draws - mu_rows[:, None, :]
        cov_rows = np.einsum("nm,nmq,nmr->nqr", w, centered, centered)
        mu = mu_rows.mean(axis=0)
        b = mu_rows - mu
        cov = cov_rows.mean(axis=0) + (b.T @ b) / self.n_rows  # total covariance
        return MomentPair(mean=mu, cov=cov)

    def mean_shift(self, delta: np.ndarray) -> np.ndarray:
        """Tilted-minus-baseline marginal mean of W (used for group shifts)."""
        return self._moments(delta).mean - self._baseline.mean

    def value(self, delta: np.ndarray) -> float:
        return gelbrich_sq(self._baseline, self._moments(delta))

    def grad(self, delta: np.ndarray) -> np.ndarray:
        """Centered finite differences with step ``spec.fd_step``; the cached
        draws provide common random numbers across the +/- evaluations."""
        delta = np.asarray(delta, dtype=float).reshape(-1)
        h = self.spec.fd_step
        g = np.empty_like(delta)
        for j in range(delta.size):
            e = np.zeros_like(delta)
            e[j] = h
            g[j] = (self.value(delta + e) - self.value(delta - e)) / (2.0 * h)
        return g


def gelbrich_constraint_G(delta, model, baseline: Dataset, spec: ConstraintSpec) -> float:
    """One-shot G(delta); build a :class:`GelbrichConstraint` for repeated use."""
    return GelbrichConstraint.from_dataset(model, baseline, spec).value(delta)


def grad_G(delta, model, baseline: Dataset, spec: ConstraintSpec) -> np.ndarray:
    """One-shot centered-difference gradient of G at delta."""
    return GelbrichConstraint.from_dataset(model, baseline, spec).grad(delta)
