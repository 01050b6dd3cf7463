"""Exception hierarchy shared by all proxyopt modules."""


class ProxyOptError(Exception):
    """Base class for every error raised by proxyopt."""


class InvalidDimensionError(ProxyOptError, ValueError):
    pass


class UnknownBenchmarkError(ProxyOptError, ValueError):
    pass


class InsufficientSamplesError(ProxyOptError, ValueError):
    pass


class InvalidParameterError(ProxyOptError, ValueError):
    pass


class OutOfDomainError(ProxyOptError, ValueError):
    """A point lies outside the box bounds of its benchmark.

    ``row`` holds the offending row index when the check ran over a matrix.
    """

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class InvalidArchitectureError(ProxyOptError, ValueError):
    pass


class InvalidInputError(ProxyOptError, ValueError):
    pass


class ShapeError(ProxyOptError, ValueError):
    pass


class TrainingDivergedError(ProxyOptError, RuntimeError):
    """Loss or gradients became non-finite. ``epoch`` is set when known."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class UnsupportedError(ProxyOptError, ValueError):
    pass


class ModelFormatError(ProxyOptError, ValueError):
    pass
