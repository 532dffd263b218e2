"""Exception hierarchy used across the package."""


class NlsAvgError(Exception):
    """Base class for all package errors."""


class ConfigurationError(NlsAvgError, ValueError):
    """A parameter combination cannot be honoured (truncation, budgets, schema)."""


class DomainError(NlsAvgError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class ShapeError(NlsAvgError, ValueError):
    """Array shapes do not match the grid or the basis."""


class InsufficientDataError(NlsAvgError, ValueError):
    pass


class IntegrationError(NlsAvgError, RuntimeError):
    """Non-finite values appeared during time stepping."""
