"""Exception types raised across the package."""


class RfsenseError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RfsenseError, ValueError):
    """A parameter or configuration value is out of its valid range."""


class InputError(RfsenseError, ValueError):
    """Input data has the wrong shape or length for the operation."""


class DegenerateInputError(InputError):
    """Input is valid in shape but degenerate (all-zero, zero-length, ...)."""


class AliasingError(ConfigurationError):
    """A requested frequency falls outside the Nyquist band."""


class StateError(RfsenseError, RuntimeError):
    """An operation was called in the wrong state (e.g. backward before forward)."""


class DivergenceError(RfsenseError, RuntimeError):
    """Training produced a non-finite loss."""
