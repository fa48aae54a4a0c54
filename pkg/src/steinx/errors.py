"""Exception hierarchy shared by all steinx modules."""


class SteinxError(Exception):
    """Base class for every error raised by steinx."""


class DomainError(SteinxError, ValueError):
    """A point or argument lies outside the set where an operation is defined."""


class DimensionError(DomainError):
    pass


class OutOfRangeError(SteinxError):
    """A point lies outside the region supported by a finite construction."""


class UnsupportedOrderError(SteinxError, ValueError):
    pass


class IllConditionedError(SteinxError):
    pass


class ConsistencyError(SteinxError):
    """An internal invariant was violated (indicates a construction defect)."""


class SamplingError(SteinxError):
    pass


class ConfigError(SteinxError):
    pass
