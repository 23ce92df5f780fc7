"""Exception hierarchy shared by every stage of the pipeline.

Each class maps to one CLI exit code: configuration problems exit 2,
data problems exit 3, estimation problems exit 4.
"""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigurationError(PipelineError):
    """Invalid configuration: bad anchor, inconsistent options, bad parameters."""

    exit_code = 2


class SpecificationError(ConfigurationError):
    """Invalid request against a valid object: unknown variable, bad lag, bad node."""


class IdentifiabilityError(ConfigurationError):
    """No valid adjustment set exists for the requested causal query."""


class DataError(PipelineError):
    """Malformed or inconsistent input records."""

    exit_code = 3


class EstimationError(PipelineError):
    """Estimation cannot proceed: empty design, collinearity, singular systems."""

    exit_code = 4


class UnderIdentifiedError(EstimationError):
    """Fewer instruments than parameters in a GMM estimation."""
