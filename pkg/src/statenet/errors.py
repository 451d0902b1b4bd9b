"""Exception types raised across the package.

Everything derived from :class:`StateNetError` is a *domain* error; the CLI
maps those to exit code 1.
"""


class StateNetError(Exception):
    """Base class for domain errors."""


class ShapeError(StateNetError, ValueError):
    pass


class LayerStateError(StateNetError, RuntimeError):
    """A layer or optimizer was used out of order (e.g. backward before forward)."""


class ParameterError(StateNetError, ValueError):
    pass


class DecodeError(StateNetError):
    pass


class DatasetError(StateNetError):
    pass


class WeightFileError(StateNetError):
    pass


class DivergenceError(StateNetError, FloatingPointError):
    """Raised when a training batch produces a non-finite loss."""
