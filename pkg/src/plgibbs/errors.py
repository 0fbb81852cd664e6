"""Exception types shared across the package."""


class PlgError(Exception):
    """Base class for all package-specific errors."""


class InvalidParameterError(PlgError, ValueError):
    """A numeric argument is outside its admissible range (or non-finite)."""


class StructureError(PlgError, ValueError):
    """A group structure is inconsistent with the data it is applied to."""


class DecompositionError(PlgError):
    """A matrix factorization failed even after the jitter retry."""


class ConfigurationError(PlgError, ValueError):
    """A configuration combination is rejected (e.g. improper-prior Geweke run)."""


class DegenerateEpsilonError(PlgError):
    """The minorization numerator is not strictly positive for this instance."""


class GridConvergenceError(PlgError):
    """Adaptive quadrature failed to reach the requested relative accuracy."""


class DriftHypothesisWarning(UserWarning):
    """The n >= 3 hypothesis behind the drift-rate guarantee does not hold."""


class DegenerateVarianceWarning(UserWarning):
    """A chain component has (numerically) zero variance; fallback values used."""
