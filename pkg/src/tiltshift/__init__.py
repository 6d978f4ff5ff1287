"""tiltshift: incremental causal effects of multivariate exposure shifts
under exponential tilting, with EIF-based one-step estimation,
Gelbrich-constrained policy optimization, and confounding sensitivity
analysis."""

from .dataset import (
    CsvSchema,
    Dataset,
    FoldAssignment,
    assign_folds,
    delta_to_raw_scale,
    destandardize,
    load_csv,
    standardize,
)
from .estimator import (
    EstimateReport,
    NuisanceBundle,
    TiltEvaluator,
    TiltVector,
    density_ratio,
    estimate_eta,
    estimate_nu,
    fit_nuisance_bundle,
    joint_covariance,
    onestep_psi,
    plugin_psi,
    remainder_bound_check,
    theta,
    tilted_mean,
)
from .geometry import (
    ConstraintSpec,
    GelbrichConstraint,
    MomentPair,
    efficient_direction,
    gelbrich_constraint_G,
    gelbrich_sq,
    grad_G,
    ratio_variance_normal,
    single_exposure_direction,
    tilted_normal_moments,
)
from .nuisance import (
    ConditionalExposureModel,
    GradientBoostedTrees,
    RidgeRegressor,
    fit_exposure_model,
    fit_gbt,
    fit_ridge,
    log_density,
    sample_conditional,
)
from .optimizer import (
    RBFGSOptions,
    init_on_manifold,
    multistart,
    project_tangent,
    rbfgs,
    retract,
    transport,
)
from .sensitivity import (
    SensitivityParams,
    benchmark_outcome,
    benchmark_rr,
    bias_bound,
    calibrate,
    endpoint_bounds,
    robustness_contour,
    scales,
)
from .simbench import DGPSpec, generate, run_benchmark, true_psi

__version__ = "0.1.0"
