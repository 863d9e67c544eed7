"""Joint metocean extremes: marginals, conditional dependence, contours."""

from .condex import (
    ConditionalExtremes,
    ConditionalReturnCurve,
    DirectionalConditionalExtremes,
    HtFit,
    MultivariateConditionalExtremes,
    QuantileRegression,
    conditional_median,
    conditional_return_curve,
    ht_residuals,
    most_probable_value,
    simulate_pairs,
)
from .currents import (
    CurrentProfileDataset,
    HarmonicFitConfig,
    harmonic_split,
    hourly_extrema,
    principal_axes,
    process_current_profiles,
    profile_conditional_extremes,
    recombine,
)
from .exceptions import FitConvergenceError, InvariantViolation
from .form import (
    ConditionalStage,
    DistributionStage,
    EnvironmentalContour,
    FormResult,
    LimitState,
    RosenblattChain,
    contours_nested,
    environmental_contour,
    failure_probability,
    form_search,
    inverse_form_design_point,
    polygon_contains,
)
from .marginals import (
    GpdParams,
    SemiParametricMarginal,
    UnivariateSample,
    decluster,
    fit_gpd,
    sample_gpd,
)
from .metocean import (
    DesignFactors,
    HaverNutzenModel,
    PowerTerm,
    ReliabilityInputs,
    ResponseSurface,
    apply_load_factor,
    back_calculate,
    load_metocean_config,
    naive_combination,
    sdof_response,
    structural_reliability,
)

__version__ = "0.1.0"
