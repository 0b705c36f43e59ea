"""Exception types shared across the package."""


class QdnnLabError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(QdnnLabError, ValueError):
    """An invalid spec, config or parameter value."""


class DimensionError(QdnnLabError, ValueError):
    """Array shapes inconsistent with the network or batch layout."""


class UndefinedValueError(QdnnLabError, ValueError):
    """A quantity is mathematically undefined for the given input."""


class TrainingDivergedError(QdnnLabError, RuntimeError):
    """Training produced a non-finite loss or parameter value."""
