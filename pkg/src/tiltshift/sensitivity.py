"""Omitted-confounder sensitivity analysis for the incremental contrast:
identifiable scales, partial-R^2 bias bounds, endpoint confidence bounds,
covariate benchmarking, and robustness contours.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .estimator import EstimateReport, NuisanceBundle, eif_components

__all__ = [
    "Z_95",
    "SensitivityParams",
    "SensitivityScales",
    "SensitivityReport",
    "scales",
    "scales_from_values",
    "bias_bound",
    "lambda_multiplier",
    "endpoint_bounds",
    "benchmark_outcome",
    "benchmark_rr",
    "calibrate",
    "robustness_contour",
]

Z_95 = 1.6448536269514722  # one-sided 95% normal quantile


@dataclass(frozen=True)
class SensitivityParams:
    """Confounding strength: eta_y_sq is the fraction of residual outcome
    variance explainable by the unmeasured variable, eta_alpha_sq the
    fraction of density-ratio variation it explains along the tilt."""

    eta_y_sq: float
    eta_alpha_sq: float
    k_y: float | None = None
    k_d: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.eta_y_sq <= 1.0:
            raise ValueError("eta_y_sq must lie in [0, 1]")
        if not 0.0 <= self.eta_alpha_sq < 1.0:
            raise ValueError("eta_alpha_sq must lie in [0, 1)")
        if self.k_y is not None and self.k_y < 0:
            raise ValueError("k_y must be nonnegative")
        if self.k_d is not None and self.k_d < 0:
            raise ValueError("k_d must be nonnegative")


@dataclass
class SensitivityScales:
    """Identifiable scale components and their centered plug-in signals."""

    sigma_s_sq: float
    nu_s_theta_sq: float
    s_hat: float
    phi_sigma: np.ndarray
    phi_nu: np.ndarray


@dataclass
class SensitivityReport:
    s_hat: float
    b_hat: float
    theta_hat: float
    theta_lo: float
    theta_hi: float
    ci_lo: float
    ci_hi: float
    se_minus: float
    se_plus: float
    params: SensitivityParams
    degenerate: bool = False


def scales_from_values(y: np.ndarray, mu_values: np.ndarray,
                       ratio_values: np.ndarray) -> SensitivityScales:
    """Scales from precomputed out-of-fold mu_hat and density-ratio values.

    sigma_s^2 is the mean squared outcome residual, nu_{s,theta}^2 the mean
    squared ratio contrast (r_delta - 1); the phi arrays are the centered
    plug-in signals feeding the endpoint standard errors.
    """
    resid_sq = (np.asarray(y, dtype=float) - np.asarray(mu_values, dtype=float)) ** 2
    contrast_sq = (np.asarray(ratio_values, dtype=float) - 1.0) ** 2
    sigma_s_sq = float(resid_sq.mean())
    nu_sq = float(contrast_sq.mean())
    return SensitivityScales(
        sigma_s_sq=sigma_s_sq,
        nu_s_theta_sq=nu_sq,
        s_hat=float(np.sqrt(sigma_s_sq * nu_sq)),
        phi_sigma=resid_sq - sigma_s_sq,
        phi_nu=contrast_sq - nu_sq,
    )


def scales(d: Dataset, bundle: NuisanceBundle, delta, path: str = "ratio_regression",
           draws: int = 2000, seed: int = 0) -> SensitivityScales:
    """Compute the scales from the bundle (the ratio contrast at delta=0 is
    identically one, so only the tilted ratio is needed)."""
    comp = eif_components(d, bundle, delta, path=path, draws=draws, seed=seed)
    return scales_from_values(d.Y, comp.mu_obs, comp.ratio)


def lambda_multiplier(params: SensitivityParams) -> float:
    return float(np.sqrt(params.eta_y_sq)
                 * np.sqrt(params.eta_alpha_sq / (1.0 - params.eta_alpha_sq)))


def bias_bound(s_hat: float, params: SensitivityParams) -> float:
    """B_hat = S_hat * sqrt(eta_y^2) * sqrt(eta_alpha^2 / (1 - eta_alpha^2));
    zero when either parameter is zero, increasing in both."""
    return float(s_hat) * lambda_multiplier(params)


def endpoint_bounds(report: EstimateReport, sc: SensitivityScales,
                    params: SensitivityParams) -> SensitivityReport:
    """Sensitivity-adjusted 95% bounds for theta(delta).

    Combines a lower confidence bound for theta_hat - B_hat with an upper
    bound for theta_hat + B_hat, where the endpoint influence values are
    phi_theta -/+ lambda * phi_S and phi_S comes from the delta method on
    S_hat. With S_hat = 0 and a nonzero lambda the S signal is undefined and
    the report degenerates to the EIF-only interval (flagged).
    """
    if report.influence_theta is None or report.theta_hat is None:
        raise ValueError("report must carry a theta contrast with influence values")
    phi_theta = report.influence_theta
    n = phi_theta.size
    lam = lambda_multiplier(params)
    degenerate = False
    if sc.s_hat == 0.0 and lam > 0.0:
        degenerate = True
        phi_s = np.zeros(n)
        b_hat = 0.0
    else:
        phi_s = np.zeros(n) if lam == 0.0 else (
            (sc.nu_s_theta_sq * sc.phi_sigma + sc.sigma_s_sq * sc.phi_nu)
            / (2.0 * sc.s_hat)
        ) if sc.s_hat > 0 else np.zeros(n)
        b_hat = bias_bound(sc.s_hat, params)
    phi_minus = phi_theta - lam * phi_s
    phi_plus = phi_theta + lam * phi_s
    se_minus = float(np.sqrt(np.sum(phi_minus**2)) / n)
    se_plus = float(np.sqrt(np.sum(phi_plus**2)) / n)
    th = report.theta_hat
    theta_lo, theta_hi = th - b_hat, th + b_hat
    return SensitivityReport(
        s_hat=sc.s_hat,
        b_hat=b_hat,
        theta_hat=th,
        theta_lo=theta_lo,
        theta_hi=theta_hi,
        ci_lo=theta_lo - Z_95 * se_minus,
        ci_hi=theta_hi + Z_95 * se_plus,
        se_minus=se_minus,
        se_plus=se_plus,
        params=params,
        degenerate=degenerate,
    )


def _projection_mse(target: np.ndarray, design: np.ndarray) -> float:
    Z = np.column_stack([np.ones(design.shape[0]), design])
    resid = target - Z @ np.linalg.lstsq(Z, target, rcond=None)[0]
    return float(np.mean(resid**2))


def benchmark_outcome(d: Dataset, j: int) -> tuple[float, float]:
    """Outcome-side benchmark for covariate j from nested linear projections
    of Y on (W, X) versus (W, X without column j); returns (eta_sq, f_sq)."""
    if not 0 <= j < d.p:
        raise ValueError(f"covariate index {j} out of range")
    full = _projection_mse(d.Y, np.hstack([d.W, d.X]))
    reduced = _projection_mse(d.Y, np.hstack([d.W, np.delete(d.X, j, axis=1)]))
    gain = max(reduced - full, 0.0)
    eta_sq = gain / reduced if reduced > 0 else 0.0
    f_sq = gain / full if full > 0 else 0.0
    return eta_sq, f_sq


def benchmark_rr(d: Dataset, bundle: NuisanceBundle | None, delta, j: int,
                 path: str = "ratio_regression", draws: int = 2000, seed: int = 0,
                 alpha_values: np.ndarray | None = None) -> float:
    """RR-side benchmark f^2 for covariate j: the fitted short density ratio
    is projected on X versus X without column j.

    At delta = 0 the ratio is identically one, the projections are
    degenerate, and f^2 is defined as 0 (a warning flags the case). Pass
    ``alpha_values`` to reuse ratio values computed elsewhere.
    """
    if not 0 <= j < d.p:
        raise ValueError(f"covariate index {j} out of range")
    delta_arr = np.asarray(delta, dtype=float).reshape(-1)
    if not np.any(delta_arr):
        warnings.warn("delta = 0: the ratio is constant, f^2 defined as 0",
                      UserWarning, stacklevel=2)
        return 0.0
    if alpha_values is None:
        if bundle is None:
            raise ValueError("need a bundle or precomputed alpha_values")
        alpha_values = eif_components(d, bundle, delta_arr, path=path,
                                      draws=draws, seed=seed).ratio
    alpha_values = np.asarray(alpha_values, dtype=float)
    full = _projection_mse(alpha_values, d.X)
    reduced = _projection_mse(alpha_values, np.delete(d.X, j, axis=1))
    gain = max(reduced - full, 0.0)
    return gain / full if full > 0 else 0.0


def calibrate(f_sq: float, k: float) -> float:
    """Map a benchmark f^2 and multiplier k to eta^2 = k f^2 / (1 + k f^2)."""
    if f_sq < 0 or k < 0:
        raise ValueError("f_sq and k must be nonnegative")
    return k * f_sq / (1.0 + k * f_sq)


def _upper_bound(report: EstimateReport, sc: SensitivityScales,
                 eta_y_sq: float, eta_alpha_sq: float) -> float:
    params = SensitivityParams(eta_y_sq=eta_y_sq, eta_alpha_sq=eta_alpha_sq)
    return endpoint_bounds(report, sc, params).ci_hi


def robustness_contour(report: EstimateReport, sc: SensitivityScales,
                       eta_y_grid: np.ndarray | None = None,
                       rel_tol: float = 1e-6) -> list[tuple[float, float]]:
    """Combinations (eta_y^2, eta_alpha^2) that move the adjusted upper
    confidence bound to zero, one root per grid point.

    Empty (with a warning) when the estimate is not significantly negative
    at zero confounding, since there is nothing to overturn. The contour is
    monotone decreasing in eta_y^2.
    """
    if report.theta_hat is None:
        raise ValueError("report must carry a theta contrast")
    if eta_y_grid is None:
        eta_y_grid = np.linspace(0.04, 1.0, 25)
    if report.theta_hat >= 0 or _upper_bound(report, sc, 0.0, 0.0) >= 0:
        warnings.warn("upper bound is already nonnegative at zero confounding; "
                      "empty contour", UserWarning, stacklevel=2)
        return []
    tol = rel_tol * abs(report.theta_hat)
    contour: list[tuple[float, float]] = []
    for ey in np.asarray(eta_y_grid, dtype=float):
        lo, hi = 0.0, 1.0 - 1e-12
        if _upper_bound(report, sc, ey, hi) < 0:
            continue  # unreachable given the pole, kept as a guard
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            ub = _upper_bound(report, sc, ey, mid)
            if abs(ub) <= tol:
                lo = hi = mid
                break
            if ub < 0:
                lo = mid
            else:
                hi = mid
        contour.append((float(ey), float(0.5 * (lo + hi))))
    return contour
