"""Perturbation expansions of posterior moments for Bayesian inverse problems."""

from .errors import (
    ConvergenceFailure,
    CostGuard,
    DegenerateWeights,
    DimensionMismatch,
    Diverged,
    EmptyBasis,
    IoFailure,
    MissingSecondDerivatives,
    NonPositiveState,
    NotSpd,
    PointOutsideMesh,
    PostpertError,
    SingularPrior,
    SolverFailure,
)
from .expansion import (
    PosteriorMoments,
    expand_posterior_correlation,
    expand_posterior_covariance,
    expand_posterior_mean,
    expand_posterior_moments,
)
from .estimators import (
    SampleBudget,
    estimate_posterior,
    estimate_posterior_sweep,
    halton_point,
    tensor_grid_oracle,
)
from .linalg import (
    EigenPairs,
    SpdMatrix,
    cholesky_solve,
    field_l2_norm,
    generalized_sym_eig,
    sigma_inner,
    tensor_l2_norm,
)
from .model_api import (
    ForwardModel,
    MeasurementSetup,
    ModelEvaluations,
    evaluate_at,
    generate_data,
    likelihood_terms,
)
from .prior import (
    AffineExpansion,
    CoefficientLaw,
    KleBasis,
    brownian_bridge_modes,
    build_kle,
    coefficient_moments,
    gaussian_kernel,
    realize,
)
from .refine import RefineState, refine_step, run_refinement, tikhonov_gradient

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
