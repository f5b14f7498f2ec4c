from dataclasses import dataclass


@dataclass
class ConfigurationError(Exception):
    """Base class for configuration errors"""

    message: str


@dataclass
class DataSourceError(Exception):
    """Base class for unreadable or malformed input files"""

    message: str


@dataclass
class ContractViolation(Exception):
    """Raised when an operation is called outside of its preconditions"""

    message: str


@dataclass
class NotPositiveDefinite(Exception):
    """Raised when a Cholesky factorization fails"""

    message: str


@dataclass
class Degenerate(Exception):
    """Raised when a linear system needed by a score is singular"""

    message: str


@dataclass
class ResourceLimit(Exception):
    """Raised when an explicit matrix would exceed the configured size limit"""

    message: str
