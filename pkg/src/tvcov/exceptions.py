"""Exception hierarchy shared across the package."""


class TvcovError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TvcovError):
    """A configuration value is missing, malformed or out of range."""


class DataError(TvcovError):
    """Input data violates a structural requirement (shapes, ordering, gaps)."""


class InvalidParamsError(TvcovError):
    """Model parameters violate an invariant (e.g. nonpositive variance)."""


class NumericError(TvcovError):
    """A numerical operation failed beyond recovery (singular matrix etc.)."""


class DegenerateWeightsError(NumericError):
    """All kernel values underflowed at a query time; widen the bandwidth."""
