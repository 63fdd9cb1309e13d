"""Difference-in-differences mediation: natural and controlled effects.

Estimates natural indirect, natural direct, and total effects on the
treated, plus controlled direct effects along a mediator grid, from
two-period panels where identification leans on a conditional
parallel-trends assumption.  Point estimates come from influence-function
moment equations that stay consistent when a subset of the working models
is wrong, with plug-in standard errors from the estimated influence values.
"""

from .controlled import (
    CdeCurve,
    CdePoint,
    ControlledEstimate,
    bar_tau_continuous,
    bar_tau_discrete,
    cde_curve,
    cde_from_arms,
)
from .dataset import ObservationalDataset
from .design import DesignSpec, build_design
from .errors import (
    ConfigError,
    DataError,
    DegenerateSampleError,
    DidmedError,
    EmptyGroupError,
    EstimationError,
    InsufficientLocalDataError,
    SchemaError,
    SeparationError,
    SingularFitError,
    UnsupportedLevelError,
)
from .natural import (
    EffectEstimate,
    component_estimates,
    natural_effects,
    tau_00,
    tau_01,
    tau_11,
)
from .nuisance import (
    NuisanceSet,
    NuisanceSpecs,
    OverlapReport,
    fit_nuisances,
    overlap_diagnostics,
)
from .regression import (
    KernelConfig,
    LocalPolynomialFit,
    fit_local_polynomial,
    fit_logistic,
    fit_ols,
    silverman_bandwidth,
)
from .simulation import (
    DgpConfig,
    SimulationReport,
    TruthSet,
    compute_truths,
    generate,
    regression_based,
    run_monte_carlo,
)

__version__ = "0.1.0"

__all__ = [
    "CdeCurve",
    "CdePoint",
    "ConfigError",
    "ControlledEstimate",
    "DataError",
    "DegenerateSampleError",
    "DesignSpec",
    "DgpConfig",
    "DidmedError",
    "EffectEstimate",
    "EmptyGroupError",
    "EstimationError",
    "InsufficientLocalDataError",
    "KernelConfig",
    "LocalPolynomialFit",
    "NuisanceSet",
    "NuisanceSpecs",
    "ObservationalDataset",
    "OverlapReport",
    "SchemaError",
    "SeparationError",
    "SimulationReport",
    "SingularFitError",
    "TruthSet",
    "UnsupportedLevelError",
    "bar_tau_continuous",
    "bar_tau_discrete",
    "build_design",
    "cde_curve",
    "cde_from_arms",
    "compute_truths",
    "component_estimates",
    "fit_local_polynomial",
    "fit_logistic",
    "fit_nuisances",
    "fit_ols",
    "generate",
    "natural_effects",
    "overlap_diagnostics",
    "regression_based",
    "run_monte_carlo",
    "silverman_bandwidth",
    "tau_00",
    "tau_01",
    "tau_11",
    "__version__",
]
