"""Exception types shared across the package."""


class FgpError(Exception):
    """Base class for errors raised by fgpreg."""


class InvalidInputError(FgpError, ValueError):
    """Raised when inputs violate a documented precondition."""


class NumericalError(FgpError, RuntimeError):
    """Raised when a linear-algebra step fails beyond recovery.

    ``state`` carries the parameter values that produced the failure, when
    known, so samplers can log and reject instead of crashing.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class InitializationError(FgpError, RuntimeError):
    """Raised when no valid starting point could be found for a chain."""


class ConfigError(FgpError, ValueError):
    """Raised for malformed run configurations or data files."""
