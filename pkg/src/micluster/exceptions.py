"""Exception hierarchy shared by all modules."""


class MIClusterError(Exception):
    """Base class for package errors."""


class InvalidParameterError(MIClusterError, ValueError):
    pass


class DegenerateFitError(MIClusterError, ValueError):
    """EM cannot produce a usable mixture for the given data."""


class SingularCovarianceError(MIClusterError, ValueError):
    """A (restricted) covariance block is not positive definite.

    ``component`` is the offending mixture component, or ``None`` when the
    matrix is shared by all components.
    """

    def __init__(self, message, component=None):
        super().__init__(message)
        self.component = component


class ChainFailure(MIClusterError, RuntimeError):
    """An imputation chain could not continue (empty cluster, singular draw...)."""


class CalibrationError(MIClusterError, ValueError):
    pass


class ParseError(MIClusterError, ValueError):
    """Malformed CSV or configuration input; message carries the location."""
