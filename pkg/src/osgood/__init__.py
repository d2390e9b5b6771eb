"""Numerical lab for Osgood-type uniqueness and blow-up criteria for scalar ODEs."""
from .errors import ConfigError, DomainError, OsgoodError, OutOfRangeError

__version__ = "0.1.0"

__all__ = ["ConfigError", "DomainError", "OsgoodError", "OutOfRangeError", "__version__"]
