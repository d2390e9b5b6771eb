"""Exception types shared across the package."""


class OsgoodError(Exception):
    """Base class for all package errors."""


class DomainError(OsgoodError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigError(OsgoodError, ValueError):
    """Invalid integrator, sampler or command configuration."""


class OutOfRangeError(OsgoodError, ValueError):
    """A dense-output query falls outside the trajectory span."""
