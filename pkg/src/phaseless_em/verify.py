"""Numerical checks of far-field identities and of the uniqueness experiments.

Every check returns an :class:`IdentityReport`.  Most are upper bounds
(``residual <= tolerance``); the invariance-breaking and distinguishability
checks are lower bounds on a separation and carry ``comparison="ge"``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Literal, Sequence

import numpy as np

from . import mie
from .core import Incident, MeasurementGrid, WaveContext, frame_at, spherical_to_cartesian
from .errors import ConfigError, GridMismatchError
from .mie import cross_matrix
from .scene import (
    FarFieldFn,
    Scene,
    SolverSpec,
    far_field_model,
    incident_waves,
    phaseless_data,
    phaseless_from_fields,
)
from .specfun import maxwell_eigenvalue_free


@dataclass(frozen=True)
class IdentityReport:
    name: str
    residual: float
    tolerance: float
    comparison: Literal["le", "ge"] = "le"
    grid: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if self.comparison == "le":
            return bool(self.residual <= self.tolerance)
        return bool(self.residual >= self.tolerance)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = self.passed
        return d

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _scale(a) -> float:
    s = float(np.abs(a).max()) if np.size(a) else 0.0
    return s if s > 0 else 1.0


def check_farfield_relations(ffE, ffH, xhat, tol: float = 1e-12, grid: dict | None = None
                             ) -> IdentityReport:
    """H^inf = xhat x E^inf and tangentiality of both, relative to max |E^inf|.

    ``ffE`` and ``ffH`` hold vectors (..., 3) or matrices (..., 3, 3) at the
    directions ``xhat`` (..., 3).
    """
    E, H, x = np.asarray(ffE), np.asarray(ffH), np.asarray(xhat, dtype=float)
    if E.shape != H.shape:
        raise GridMismatchError("electric and magnetic far fields on different grids")
    matrix = E.ndim == x.ndim + 1
    if (E.shape[:-2] if matrix else E.shape[:-1]) != x.shape[:-1]:
        raise GridMismatchError("far fields and directions do not match")
    if matrix:
        rel = H - cross_matrix(x) @ E
        tE = np.einsum("...i,...ij->...j", x, E)
        tH = np.einsum("...i,...ij->...j", x, H)
    else:
        rel = H - np.cross(x, E)
        tE = np.einsum("...i,...i->...", x, E)
        tH = np.einsum("...i,...i->...", x, H)
    s = _scale(E)
    parts = {
        "cross": float(np.abs(rel).max(initial=0.0)) / s,
        "tangential_E": float(np.abs(tE).max(initial=0.0)) / s,
        "tangential_H": float(np.abs(tH).max(initial=0.0)) / s,
    }
    return IdentityReport("farfield_relations", max(parts.values()), tol, grid=grid or {},
                          extra=parts)


def check_polarization_null(M, d, tol: float = 1e-12, grid: dict | None = None) -> IdentityReport:
    """E^inf(xhat, d) d = 0, relative to max |E^inf|; ``M`` is (..., 3, 3), ``d`` (..., 3)."""
    M = np.asarray(M)
    r = np.einsum("...ij,...j->...i", M, np.broadcast_to(d, M.shape[:-1]))
    return IdentityReport("polarization_null", float(np.abs(r).max()) / _scale(M), tol,
                          grid=grid or {})


def symmetric_directions(n: int, seed: int = 0) -> np.ndarray:
    """``n`` (even) random directions closed under negation, pairs adjacent."""
    if n % 2:
        raise ValueError("need an even number of directions")
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n // 2, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return np.stack([v, -v], axis=1).reshape(n, 3)


def _negation_index(X: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    D = np.linalg.norm(X[:, None, :] + X[None, :, :], axis=2)
    j = np.argmin(D, axis=1)
    if np.any(D[np.arange(len(X)), j] > atol):
        raise GridMismatchError("direction set is not closed under negation")
    return j


def check_reciprocity(M, X, tol: float = 1e-10, grid: dict | None = None) -> IdentityReport:
    """max |M(x_i, x_j) - M(-x_j, -x_i)^T| / max |M| for ``M[i, j] = E^inf(X_i, X_j)``."""
    M = np.asarray(M)
    X = np.asarray(X, dtype=float)
    if M.shape != (len(X), len(X), 3, 3):
        raise GridMismatchError("matrix table does not match the direction set")
    neg = _negation_index(X)
    R = M - np.swapaxes(M[neg][:, neg].transpose(1, 0, 2, 3), -1, -2)
    return IdentityReport("reciprocity", float(np.abs(R).max()) / _scale(M), tol,
                          grid=grid or {"n_directions": len(X)})


def sphere_quadrature(center, radius: float, n_theta: int = 48, n_phi: int = 96):
    """Points, outward normals and weights of a Gauss-Legendre x trapezoid rule."""
    x, w = np.polynomial.legendre.leggauss(n_theta)
    theta = np.arccos(x)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    T, P = np.meshgrid(theta, phi, indexing="ij")
    nu = spherical_to_cartesian(T.ravel(), P.ravel())
    wts = np.outer(w, np.full(n_phi, 2 * np.pi / n_phi)).ravel() * radius**2
    return np.asarray(center, dtype=float) + radius * nu, nu, wts


def stratton_chu_farfield(nuE, nuH, points, weights, xhat, ctx: WaveContext) -> np.ndarray:
    """(ik/4pi) xhat x int {nu x E^s + (nu x H^s) x xhat} exp(-ik xhat . y) ds(y).

    ``nuE`` and ``nuH`` are the traces nu x E^s and nu x H^s at the
    quadrature ``points`` (Q, 3); returns (n_dirs, 3).
    """
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    ph = np.exp(-1j * ctx.k * xhat @ np.asarray(points).T) * weights  # (n, Q)
    a = ph @ nuE  # (n, 3)
    b = ph @ nuH
    inner = a + np.cross(b, xhat)
    return 1j * ctx.k / (4 * np.pi) * np.cross(xhat, inner)


def mie_traces(sphere, coeffs, points, normals, d, p, ctx: WaveContext):
    E, H = mie.near_scattered_field(sphere, coeffs, points, d, p, ctx)
    return np.cross(normals, E), np.cross(normals, H)


def check_stratton_chu(sphere, ctx: WaveContext, d, p, xhat, factor: float = 3.0,
                       n_theta: int = 48, n_phi: int = 96, tol: float = 1e-8) -> IdentityReport:
    """Radiation integral of series near fields on a sphere of radius factor * a."""
    coeffs = mie.mie_coefficients(sphere, ctx)
    pts, nu, w = sphere_quadrature(sphere.center, factor * sphere.radius, n_theta, n_phi)
    nuE, nuH = mie_traces(sphere, coeffs, pts, nu, d, p, ctx)
    E_sc = stratton_chu_farfield(nuE, nuH, pts, w, xhat, ctx)
    E_mie = mie.sphere_far_field_matrix(sphere, coeffs, xhat, np.asarray(d, float), ctx) @ p
    res = float(np.linalg.norm(E_sc - E_mie) / np.linalg.norm(E_mie))
    return IdentityReport("stratton_chu", res, tol,
                          grid={"n_theta": n_theta, "n_phi": n_phi, "radius": factor * sphere.radius})


def _phaseless(model: FarFieldFn, grid: MeasurementGrid, incidents) -> np.ndarray:
    waves, idx = incident_waves(incidents)
    return phaseless_from_fields(grid, model(grid.directions(), waves), idx)


def _translated_model(sphere, coeffs, z, ctx) -> FarFieldFn:
    moved = sphere.moved(np.add(sphere.center, z))

    def fields(xhat, waves):
        out = np.empty((len(xhat), len(waves), 3), dtype=complex)
        for j, (d, p) in enumerate(waves):
            M = mie.sphere_far_field_matrix(moved, coeffs, xhat, np.asarray(d, float), ctx)
            out[:, j] = M @ np.asarray(p, dtype=float)
        return out

    return fields


def translation_difference(sphere, z, incidents, grid: MeasurementGrid, ctx: WaveContext):
    """(max phaseless difference, max phaseless value) between sphere and sphere + z."""
    coeffs = mie.mie_coefficients(sphere, ctx)
    a = _phaseless(_translated_model(sphere, coeffs, (0.0, 0.0, 0.0), ctx), grid, incidents)
    b = _phaseless(_translated_model(sphere, coeffs, z, ctx), grid, incidents)
    return float(np.abs(a - b).max()), float(a.max())


def check_translation_invariance(sphere, z, d, p, grid: MeasurementGrid, ctx: WaveContext,
                                 tol: float = 1e-12) -> IdentityReport:
    """Single plane wave: the phaseless data do not see a translation (relative to max)."""
    diff, top = translation_difference(sphere, z, [Incident.single(d, p)], grid, ctx)
    return IdentityReport("translation_invariance", diff / (top or 1.0), tol,
                          grid=grid.spec(), extra={"z": list(map(float, z))})


def check_invariance_broken(sphere, z, incident: Incident, grid: MeasurementGrid,
                            ctx: WaveContext, threshold: float = 0.05) -> IdentityReport:
    """Two-wave incident: relative phaseless change under translation, must reach ``threshold``."""
    if np.allclose(incident.d1, incident.d2):
        raise ValueError("invariance breaking needs d1 != d2")
    diff, top = translation_difference(sphere, z, [incident], grid, ctx)
    return IdentityReport("invariance_broken", diff / (top or 1.0), threshold, comparison="ge",
                          grid=grid.spec(), extra={"z": list(map(float, z)), "max_value": top})


def cross_term(a, b) -> np.ndarray:
    """Re{a conj(b)}, which equals (|a + b|^2 - |a|^2 - |b|^2) / 2."""
    return np.real(a * np.conj(b))


def cross_terms(model: FarFieldFn, grid: MeasurementGrid, incidents) -> np.ndarray:
    """Re{[e_m . E(xhat, d1) p1] conj[e_m . E(xhat, d2) p2]}, shape (n_dirs, n_inc, 2)."""
    X = grid.directions()
    e_phi, e_theta = frame_at(X)
    frames = np.stack([e_phi, e_theta], axis=1)
    w1 = model(X, [(i.d1, i.p1) for i in incidents])
    w2 = model(X, [(i.d2, i.p2) for i in incidents])
    a = np.einsum("xmd,xjd->xjm", frames, w1)
    b = np.einsum("xmd,xjd->xjm", frames, w2)
    return cross_term(a, b)


def check_cross_term_identity(model1: FarFieldFn, model2: FarFieldFn, grid: MeasurementGrid,
                              incidents, tol: float = 1e-12) -> IdentityReport:
    """Largest difference between the two scenes' cross terms, relative to the largest term."""
    c1 = cross_terms(model1, grid, incidents)
    c2 = cross_terms(model2, grid, incidents)
    res = float(np.abs(c1 - c2).max()) / _scale(c1)
    return IdentityReport("cross_term_identity", res, tol, grid=grid.spec())


def check_gauge_invariance(model: FarFieldFn, grid: MeasurementGrid, incidents, c: float = 0.7,
                           tol: float = 1e-12) -> IdentityReport:
    """Phaseless data are unchanged by p_j -> p_j + c d_j."""
    shifted = [
        Incident(i.d1, i.d2, tuple(np.add(i.p1, c * np.asarray(i.d1))),
                 tuple(np.add(i.p2, c * np.asarray(i.d2))))
        for i in incidents
    ]
    a = _phaseless(model, grid, incidents)
    b = _phaseless(model, grid, shifted)
    return IdentityReport("gauge_invariance", float(np.abs(a - b).max()) / _scale(a), tol,
                          grid=grid.spec())


@dataclass(frozen=True)
class DistinguishabilityReport:
    linf: float
    l2: float
    max_value: float
    n_records: int

    @property
    def relative_linf(self) -> float:
        return self.linf / self.max_value if self.max_value else 0.0

    def as_dict(self) -> dict:
        d = asdict(self)
        d["relative_linf"] = self.relative_linf
        return d


def _same_ball(a, b) -> bool:
    if a is None or b is None:
        return a is b
    return np.allclose(a.center, b.center, rtol=0, atol=0) and a.radius == b.radius and a.bc == b.bc


def distinguishability_experiment(scene1: Scene, scene2: Scene, incidents: Sequence[Incident],
                                  grid: MeasurementGrid, solver: SolverSpec = SolverSpec()
                                  ) -> DistinguishabilityReport:
    """L-infinity and L2 distances between the phaseless data of two scenes."""
    B = scene1.reference_ball
    if B is None or not _same_ball(B, scene2.reference_ball):
        raise ConfigError("both scenes need the same reference ball")
    if not maxwell_eigenvalue_free(scene1.ctx, B.radius).admissible:
        raise ConfigError("reference ball is not admissible at this wavenumber")
    if scene1.ctx != scene2.ctx:
        raise ConfigError("scenes use different wavenumbers")
    scene1.check_geometry()
    scene2.check_geometry()
    a = phaseless_data(scene1, solver, grid, incidents)
    b = phaseless_data(scene2, solver, grid, incidents) if scene2 != scene1 else a
    diff = (a - b).ravel()
    top = float(max(a.max(), b.max()))
    return DistinguishabilityReport(float(np.abs(diff).max()), float(np.linalg.norm(diff)), top,
                                    diff.size)


def far_field_l2_error(M, M_ref, weights) -> float:
    """Relative L2 error of matrix tables over a weighted direction grid."""
    w = np.asarray(weights)[:, None, None]
    return float(np.sqrt(np.sum(w * np.abs(M - M_ref) ** 2) / np.sum(w * np.abs(M_ref) ** 2)))


def mie_efie_comparison(ctx: WaveContext, radius: float = 1.0, subdivisions: int = 3,
                        grid: MeasurementGrid = MeasurementGrid(), d=(0.0, 0.0, 1.0),
                        volume_match: bool = False, tol: float = 0.03) -> IdentityReport:
    """Relative L2 far-field error of the EFIE sphere against the series."""
    sphere = mie.SphereObstacle((0.0, 0.0, 0.0), radius)
    solver = SolverSpec(subdivisions=subdivisions, volume_match=volume_match)
    model = far_field_model(Scene(ctx, (sphere,)), solver)
    X = grid.directions()
    d = np.asarray(d, dtype=float)
    M_efie = model(X, [(d, e) for e in np.eye(3)]).transpose(0, 2, 1)
    M_mie = mie.far_field_matrix(mie.mie_coefficients(sphere, ctx), X, d)
    err = far_field_l2_error(M_efie, M_mie, grid.weights())
    return IdentityReport("mie_efie_l2", err, tol, grid=grid.spec(),
                          extra={"subdivisions": subdivisions, "ka": ctx.k * radius})
