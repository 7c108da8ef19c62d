"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Non-square input to a matrix-function routine."""


class DomainError(ValueError):
    """Non-finite entries, or an unsupported phi index."""


class ConfigurationError(ValueError):
    """Invalid run configuration (bad stepsize grid, unknown id, ...)."""


class UnsupportedError(ValueError):
    """Operation asked for outside its supported range."""


class CapabilityError(ValueError):
    """A required system capability (e.g. a Jacobian action) is missing."""


class OracleError(RuntimeError):
    """The reference-solution oracle refused to certify its result."""


class BlowUpError(RuntimeError):
    """A step produced non-finite values."""

    def __init__(self, t: float, step_index: int = -1):
        super().__init__(f"non-finite state at t = {t!r}")
        self.t = t
        self.step_index = step_index
