"""Exception hierarchy shared across the package."""


class PhaselessError(Exception):
    """Base class for all package errors."""


class PoleError(PhaselessError, ValueError):
    """Direction lies inside the pole exclusion band of the spherical frame."""


class ResonanceError(PhaselessError, ArithmeticError):
    """A partial-wave denominator vanished (near-eigenvalue configuration)."""


class SingularMatrixError(PhaselessError, ArithmeticError):
    """The EFIE impedance matrix could not be factorized."""


class TooCloseError(PhaselessError, ValueError):
    """Field point too close to a meshed surface for the requested evaluation."""


class OverlapError(PhaselessError, ValueError):
    """Two bodies of a scene intersect or touch."""


class GeometryError(PhaselessError, ValueError):
    """Parameters violate the containment or disjointness hypotheses."""


class GridMismatchError(PhaselessError, ValueError):
    """Two far-field data sets are sampled on different grids."""


class ConfigError(PhaselessError, ValueError):
    """Invalid scene configuration."""


class HashMismatchError(ConfigError):
    """Data file was generated from a different configuration."""


class BudgetExceeded(RuntimeWarning):
    """Optimizer stopped on its evaluation budget; the result is best-so-far."""
