"""Exception hierarchy shared by every module."""


class FisherDAError(Exception):
    """Base class for all package errors."""


class DimensionError(FisherDAError, ValueError):
    pass


class ParameterError(FisherDAError, ValueError):
    pass


class EmptyInputError(FisherDAError, ValueError):
    pass


class LabelError(FisherDAError, ValueError):
    pass


class StateError(FisherDAError, RuntimeError):
    pass


class DegenerateCentersError(FisherDAError, ValueError):
    """Between-class trace too small for the trace-ratio form."""


class NormalizationError(FisherDAError, ValueError):
    pass


class InsufficientSamplesError(FisherDAError, ValueError):
    pass


class CoverageError(FisherDAError, ValueError):
    """A domain is missing from a discriminator batch."""


class MetricError(FisherDAError, ValueError):
    pass


class ParseError(FisherDAError, ValueError):
    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class ConfigError(FisherDAError, ValueError):
    pass
