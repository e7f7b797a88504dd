"""Exception hierarchy shared by all modules."""


class QuasiHamError(Exception):
    """Base class for every error raised by this package."""


class InvalidDimensionError(QuasiHamError, ValueError):
    pass


class InvalidStateError(QuasiHamError, ValueError):
    pass


class InvalidUnitaryError(QuasiHamError, ValueError):
    pass


class InvalidOperatorError(QuasiHamError, ValueError):
    pass


class InvalidEnvironmentError(QuasiHamError, ValueError):
    pass


class NonErgodicEnvironmentError(QuasiHamError):
    """The rate matrix has a degenerate zero eigenvalue (disconnected chain)."""


class StateSpaceOverflowError(QuasiHamError):
    """An explicit state space would exceed the configured size cap."""


class DefectiveMatrixError(QuasiHamError):
    """Eigendecomposition requested on a (numerically) defective matrix."""


class UnsupportedBiasError(QuasiHamError):
    """Closed forms only cover unbiased fluctuators; use the engine instead."""


class IntegrationError(QuasiHamError):
    pass


class FitFailureError(QuasiHamError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(QuasiHamError):
    """Invalid run configuration; ``fields`` lists the offending keys."""

    def __init__(self, message, fields=()):
        super().__init__(message)
        self.fields = list(fields)


class RoutingError(QuasiHamError):
    """Requested output cannot be produced for this configuration."""
