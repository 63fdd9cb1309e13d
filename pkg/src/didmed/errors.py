"""Exception hierarchy shared across the package.

The command line maps these onto exit codes (see ``didmed.cli``):
configuration and schema problems exit 2, data problems exit 3, and
numerical estimation failures exit 4.
"""


class DidmedError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(DidmedError):
    """Malformed, inconsistent, or incomplete configuration."""


class SchemaError(ConfigError):
    """A referenced column or model term is absent from the dataset schema."""


class DataError(DidmedError):
    """Input data violate a documented requirement (missing, non-finite, unparseable)."""


class EmptyGroupError(DataError):
    """One of the treatment groups contains no units."""


class EstimationError(DidmedError):
    """A model fit or estimator failed numerically."""


class SingularFitError(EstimationError):
    """Design matrix is rank deficient beyond the regularization tolerance."""


class SeparationError(EstimationError):
    """Logistic fit diverged; the classes are (quasi-)separated."""


class DegenerateSampleError(EstimationError):
    """A sample statistic needed by an estimator is degenerate (no spread)."""


class UnsupportedLevelError(EstimationError):
    """A mediator level has no support where the estimator needs it."""


class InsufficientLocalDataError(EstimationError):
    """Too few observations carry kernel weight near the evaluation point."""
