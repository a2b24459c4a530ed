"""Exception types shared across the package."""


class StrichartzLabError(Exception):
    """Base class for all package errors."""


class InvalidInputError(StrichartzLabError):
    """An argument violates a documented precondition."""


class NumericFailureError(StrichartzLabError):
    """A numerical routine failed to converge or produced non-finite values.

    The ``best`` attribute, when set, carries the best estimate computed
    before the failure (partial trajectory, last quadrature value, ...).
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class CapacityError(StrichartzLabError):
    """A requested computation exceeds a configured size cap."""


class ConfigError(StrichartzLabError):
    """A configuration file is malformed or violates the schema.

    ``field`` names the offending entry (dotted path) when known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
