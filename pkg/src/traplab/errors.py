"""Exception types shared across the package.

All exceptions derive from TraplabError so callers (and the CLI) can
distinguish validation problems (ConfigInvalid) from numerical failures.
"""


class TraplabError(Exception):
    """Base class for all package errors."""


# ---------------------------------------------------------------- grid
class InvalidDimension(TraplabError):
    pass


class InvalidResolution(TraplabError):
    pass


class NonFiniteValue(TraplabError):
    pass


class GridMismatch(TraplabError):
    pass


class KernelTooWide(TraplabError):
    pass


# ---------------------------------------------------------- potentials
class NegativeRadius(TraplabError):
    pass


class UnsupportedDimension(TraplabError):
    pass


# ---------------------------------------------------------------- paths
class InvalidTimeStep(TraplabError):
    pass


class IndexOutOfRange(TraplabError):
    pass


class UnsupportedInitialDistribution(TraplabError):
    pass


# --------------------------------------------------------- hamiltonians
class MollifierUnderResolved(TraplabError):
    pass


# ---------------------------------------------------------- feynman_kac
class UnstableStep(TraplabError):
    pass


class NonPositiveMass(TraplabError):
    pass


# -------------------------------------------------------- rate_function
class NotNormalized(TraplabError):
    pass


class NoProgress(TraplabError):
    pass


class PositiveTilt(TraplabError):
    pass


# ----------------------------------------------------------- variational
class DivergedObjective(TraplabError):
    pass


class InfeasibleTrap(TraplabError):
    pass


# ----------------------------------------------------------- montecarlo
class AllWeightsZero(TraplabError):
    pass


# ------------------------------------------------------------------ cli
class ConfigInvalid(TraplabError):
    """Raised on config validation failure; message names the offending field."""
