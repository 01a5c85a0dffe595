"""Electromagnetic scattering by spheres and meshed PEC bodies, phaseless far-field data,
identity checks and sphere reconstruction."""
from .core import (
    Incident,
    MeasurementGrid,
    PhaselessRecord,
    WaveContext,
    default_incidents,
    incident_electric,
    incident_magnetic,
    phaseless_measure,
    spherical_to_cartesian,
    tangent_frame,
)
from .errors import (
    BudgetExceeded,
    ConfigError,
    GeometryError,
    GridMismatchError,
    HashMismatchError,
    OverlapError,
    PhaselessError,
    PoleError,
    ResonanceError,
    SingularMatrixError,
    TooCloseError,
)
from .mie import PEC, Dielectric, Impedance, SphereObstacle, mie_coefficients
from .scene import Ball, Scene, SolverSpec, phaseless_data
from .specfun import maxwell_eigenvalue_free

__version__ = "0.1.0"
