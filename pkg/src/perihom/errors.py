"""Exception types shared across the package."""


class PerihomError(Exception):
    """Base class for all package errors."""


class ConfigError(PerihomError, ValueError):
    """Invalid configuration: bad key, bad value, non grid-aligned geometry."""

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class DomainError(PerihomError, ValueError):
    """Argument outside the domain of an operation."""


class ContractError(PerihomError):
    """A precondition of an operation does not hold."""


class ResourceError(PerihomError):
    """Requested grid exceeds the configured size budget."""


class ConvergenceError(PerihomError):
    """Iterative solver ran out of iterations."""

    def __init__(self, message, residual, iterations):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations
