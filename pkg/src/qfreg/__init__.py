"""Linear regression of Gaussian quantile functions with exact finite-sample inference."""

from ._core import BACKEND
from .density import (
    DensityGrid,
    MeanResponseDensity,
    ResidualDensity,
    density_grid,
    density_pvalue,
    hdr_threshold,
    integrate_region,
    level_set_mass,
    mean_response_density,
    region_membership,
    residual_density,
    residual_pvalue,
)
from .encoding import (
    EmpiricalQuantile,
    GaussianQuantile,
    HUHistogram,
    empirical_quantile,
    project_d1,
    projection_objective,
    psi_coefficients,
)
from .errors import (
    AccuracyError,
    ConsistencyError,
    DataFormatError,
    DegenerateDesignError,
    DegeneratePredictionError,
    DomainError,
    InferenceUnavailableError,
    InputOutputError,
    InsufficientDataError,
    QfregError,
)
from .qlm import (
    Interval,
    QlmFit,
    QuantilePairDataset,
    ResidualPair,
    TestResult,
    confidence_intervals,
    fit,
    predict_mean_response,
    residuals,
    summary_tests,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
