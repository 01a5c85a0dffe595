"""Scenes of spherical PEC bodies and their far-field forward models.

A scene holds the unknown obstacles, an optional reference ball B and an
optional containment ball B_R.  Two forward solvers are available: the
partial-wave series (a single sphere, no reference ball) and the EFIE on
icosphere meshes of every body.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Sequence

import numpy as np

from . import efie, mie
from .core import Incident, MeasurementGrid, WaveContext
from .errors import ConfigError, GeometryError
from .mesh import icosphere, merge_scene
from .specfun import maxwell_eigenvalue_free

log = logging.getLogger(__name__)

Waves = Sequence[tuple[Sequence[float], Sequence[float]]]
#: fields(xhat (n, 3), waves) -> E^inf(xhat, d) p as (n, len(waves), 3)
FarFieldFn = Callable[[np.ndarray, Waves], np.ndarray]


@dataclass(frozen=True)
class Ball:
    center: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


@dataclass(frozen=True)
class SolverSpec:
    kind: Literal["mie", "efie"] = "efie"
    subdivisions: int = 2
    test_order: int = 3
    source_order: int = 4
    rhs_order: int = 7
    volume_match: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.kind not in ("mie", "efie"):
            raise ValueError(f"unknown solver {self.kind!r}")


@dataclass(frozen=True)
class Scene:
    ctx: WaveContext
    obstacles: tuple[mie.SphereObstacle, ...]
    reference_ball: mie.SphereObstacle | None = None
    containment: Ball | None = None
    _gap: float = field(default=1e-9, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    @property
    def bodies(self) -> tuple[mie.SphereObstacle, ...]:
        if self.reference_ball is None:
            return self.obstacles
        return self.obstacles + (self.reference_ball,)

    def with_obstacles(self, obstacles) -> "Scene":
        return replace(self, obstacles=tuple(obstacles))

    def check_geometry(self) -> None:
        """Disjoint bodies, obstacles inside B_R and B outside B_R."""
        bodies = self.bodies
        for i, a in enumerate(bodies):
            for b in bodies[i + 1 :]:
                gap = np.linalg.norm(np.subtract(a.center, b.center)) - a.radius - b.radius
                if gap <= self._gap:
                    raise GeometryError("scene bodies intersect or touch")
        R = self.containment
        if R is None:
            return
        for o in self.obstacles:
            if np.linalg.norm(np.subtract(o.center, R.center)) + o.radius >= R.radius:
                raise GeometryError("obstacle not contained in B_R")
        B = self.reference_ball
        if B is not None:
            if np.linalg.norm(np.subtract(B.center, R.center)) <= B.radius + R.radius:
                raise GeometryError("reference ball meets B_R")

    def check_reference_ball(self) -> None:
        B = self.reference_ball
        if B is None:
            return
        if not isinstance(B.bc, mie.PEC):
            raise ConfigError("reference ball must be PEC")
        rep = maxwell_eigenvalue_free(self.ctx, B.radius)
        if not rep.admissible:
            raise ConfigError(
                f"k is a Maxwell eigenvalue of the reference ball (margin {rep.margin:.3g})"
            )


def _resonance_warning(ctx: WaveContext, bodies) -> None:
    for b in bodies:
        rep = maxwell_eigenvalue_free(ctx, b.radius)
        if not rep.admissible:
            warnings.warn(
                f"k={ctx.k} is close to an interior Maxwell eigenvalue of a ball of radius "
                f"{b.radius} (margin {rep.margin:.2e}); EFIE may be ill-conditioned",
                RuntimeWarning,
                stacklevel=3,
            )


def mie_far_fields(scene: Scene) -> FarFieldFn:
    if len(scene.obstacles) != 1 or scene.reference_ball is not None:
        raise ConfigError("the series solver handles one sphere without a reference ball")
    s = scene.obstacles[0]
    coeffs = mie.mie_coefficients(s, scene.ctx)

    def fields(xhat, waves):
        xhat = np.asarray(xhat, dtype=float)
        out = np.empty((len(xhat), len(waves), 3), dtype=complex)
        for j, (d, p) in enumerate(waves):
            d = np.asarray(d, dtype=float)
            M = mie.sphere_far_field_matrix(s, coeffs, xhat, d, scene.ctx)
            out[:, j] = M @ np.asarray(p, dtype=float)
        return out

    return fields


def scene_mesh(scene: Scene, subdivisions: int, volume_match: bool = True):
    meshes = [icosphere(b.center, b.radius, subdivisions, volume_match) for b in scene.bodies]
    return merge_scene(meshes) if len(meshes) > 1 else meshes[0]


def efie_system(scene: Scene, solver: SolverSpec) -> efie.EfieSystem:
    for b in scene.bodies:
        if not isinstance(b.bc, mie.PEC):
            raise ConfigError("the EFIE solver handles PEC bodies only")
    _resonance_warning(scene.ctx, scene.bodies)
    return efie.assemble(
        scene_mesh(scene, solver.subdivisions, solver.volume_match),
        scene.ctx,
        test_order=solver.test_order,
        source_order=solver.source_order,
        rhs_order=solver.rhs_order,
        threads=solver.threads,
        cache_bodies=True,
    )


def efie_far_fields(scene: Scene, solver: SolverSpec) -> FarFieldFn:
    system = efie_system(scene, solver)
    cache: dict = {}

    def fields(xhat, waves):
        xhat = np.asarray(xhat, dtype=float)
        key = xhat.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = efie.radiation_vectors(system, xhat)
        I = efie.solve_many(system, list(waves))
        E = efie.far_field_from_coefficients(system, I, xhat, cache[key])  # (n, 3, w)
        return E.transpose(0, 2, 1)

    return fields


def far_field_model(scene: Scene, solver: SolverSpec) -> FarFieldFn:
    scene.check_geometry()
    if solver.kind == "mie":
        return mie_far_fields(scene)
    return efie_far_fields(scene, solver)


def incident_waves(incidents: Sequence[Incident]) -> tuple[list, np.ndarray]:
    """Distinct plane waves of ``incidents`` and an index array (n_inc, 2)."""
    waves: list = []
    index: dict = {}
    idx = np.empty((len(incidents), 2), dtype=int)
    for j, inc in enumerate(incidents):
        for w, (d, p) in enumerate(inc.waves()):
            key = (tuple(d), tuple(p))
            if key not in index:
                index[key] = len(waves)
                waves.append(key)
            idx[j, w] = index[key]
    return waves, idx


def phaseless_from_fields(grid: MeasurementGrid, fields: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """(n_dirs, n_inc, 2) moduli, last axis ordered (phi, theta)."""
    e_phi, e_theta = grid.frames()
    total = fields[:, idx[:, 0]] + fields[:, idx[:, 1]]
    out = np.empty(total.shape[:2] + (2,))
    out[..., 0] = np.abs(np.einsum("xd,xjd->xj", e_phi, total))
    out[..., 1] = np.abs(np.einsum("xd,xjd->xj", e_theta, total))
    return out


def phaseless_data(
    scene: Scene,
    solver: SolverSpec,
    grid: MeasurementGrid,
    incidents: Sequence[Incident],
    model: FarFieldFn | None = None,
) -> np.ndarray:
    """Phaseless data array of shape (n_dirs, n_incidents, 2)."""
    if model is None:
        model = far_field_model(scene, solver)
    waves, idx = incident_waves(incidents)
    fields = model(grid.directions(), waves)
    return phaseless_from_fields(grid, fields, idx)
