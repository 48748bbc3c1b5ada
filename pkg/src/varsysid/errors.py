"""Exception hierarchy shared by all modules."""


class VarsysidError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(VarsysidError):
    """Invalid or inconsistent run configuration."""


class DataFormatError(VarsysidError):
    """Malformed or inconsistent input data file."""


class NumericalError(VarsysidError):
    """Base class for numerical-domain failures during evaluation."""


class NonFiniteError(NumericalError):
    """A model function or density produced a non-finite value."""

    def __init__(self, message, index=None):
        super().__init__(message if index is None
                         else f"{message} (sample index {index})")
        self.index = index


class SingularCovarianceError(NumericalError):
    """A covariance matrix required to be positive definite is not."""


class NonStationaryError(NumericalError):
    """The stationary marginal covariance fixed point did not converge.

    Signals an invalid stationary process: the implied one-step transition
    has spectral radius >= 1.
    """

    def __init__(self, residual, iterations):
        super().__init__(
            f"stationary covariance fixed point did not converge in "
            f"{iterations} iterations (final residual {residual:.3e}); "
            f"the conditional/cross covariance pair does not define a "
            f"valid stationary process")
        self.residual = residual
        self.iterations = iterations
