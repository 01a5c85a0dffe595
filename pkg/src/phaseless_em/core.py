"""Geometry, incident plane waves, measurement frames and the phaseless operator.

Units are normalized so that eps0 = mu0 = 1, hence the angular frequency
equals the wavenumber.  Time dependence is exp(-i omega t) throughout.

Vectors are plain numpy arrays with a trailing axis of length 3; every
function broadcasts over leading axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import PoleError

#: Half-width of the excluded band around the poles for measurement grids.
POLE_BAND = 1e-3
#: Half-width of the band where the tangent frame is declared undefined.
FRAME_POLE_EPS = 1e-9

Component = Literal["phi", "theta"]
COMPONENTS: tuple[Component, Component] = ("phi", "theta")


@dataclass(frozen=True)
class WaveContext:
    """Wavenumber of the homogeneous background (omega = k)."""

    k: float

    def __post_init__(self):
        if not np.isfinite(self.k) or self.k <= 0:
            raise ValueError(f"wavenumber must be positive, got {self.k!r}")

    @property
    def omega(self) -> float:
        return self.k

    @property
    def wavelength(self) -> float:
        return 2 * np.pi / self.k


def unit(v, tol: float = 1e-12) -> np.ndarray:
    """Return ``v`` as a float array after checking it has unit length."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1)
    if np.any(np.abs(norm - 1.0) > tol):
        raise ValueError("expected unit vector(s)")
    return v


def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def spherical_to_cartesian(theta, phi) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def cartesian_to_spherical(x) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`spherical_to_cartesian`, with phi in [0, 2 pi)."""
    x = np.asarray(x, dtype=float)
    theta = np.arccos(np.clip(x[..., 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(x[..., 1], x[..., 0]), 2 * np.pi)
    return theta, phi


def _check_off_pole(theta, eps):
    theta = np.asarray(theta, dtype=float)
    if np.any((theta < eps) | (theta > np.pi - eps)):
        raise PoleError("direction inside the pole exclusion band")


def tangent_frame(theta, phi) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal tangent vectors ``(e_phi, e_theta)`` of the unit sphere."""
    _check_off_pole(theta, FRAME_POLE_EPS)
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    e_phi = np.stack([-sp, cp, np.zeros_like(cp * ct)], axis=-1)
    e_theta = np.stack([ct * cp, ct * sp, -st * np.ones_like(cp)], axis=-1)
    return e_phi, e_theta


def frame_at(xhat) -> tuple[np.ndarray, np.ndarray]:
    """Tangent frame evaluated at Cartesian unit vector(s)."""
    return tangent_frame(*cartesian_to_spherical(xhat))


def measurement_vector(xhat, m: Component) -> np.ndarray:
    e_phi, e_theta = frame_at(xhat)
    if m == "phi":
        return e_phi
    if m == "theta":
        return e_theta
    raise ValueError(f"unknown component {m!r}")


def transverse_basis(d) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors orthogonal to ``d`` and to each other, valid at poles too."""
    d = np.asarray(d, dtype=float)
    helper = np.where(np.abs(d[..., 2:3]) < 0.9, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0])
    u = normalize(np.cross(helper, d))
    return u, np.cross(d, u)


def incident_electric(x, d, p, ctx: WaveContext) -> np.ndarray:
    """E^i(x, d) p = ik (d x p) x d exp(ik x.d)."""
    x, d, p = (np.asarray(a, dtype=float) for a in (x, d, p))
    amp = np.cross(np.cross(d, p), d)
    phase = np.exp(1j * ctx.k * np.sum(x * d, axis=-1))
    return 1j * ctx.k * amp * phase[..., None]


def incident_magnetic(x, d, p, ctx: WaveContext) -> np.ndarray:
    """H^i(x, d) p = ik (d x p) exp(ik x.d)."""
    x, d, p = (np.asarray(a, dtype=float) for a in (x, d, p))
    phase = np.exp(1j * ctx.k * np.sum(x * d, axis=-1))
    return 1j * ctx.k * np.cross(d, p) * phase[..., None]


def project_tangential(xhat, v) -> np.ndarray:
    """Remove the radial part of ``v`` with respect to ``xhat``."""
    xhat = np.asarray(xhat)
    return v - xhat * np.sum(xhat * v, axis=-1, keepdims=True)


def phaseless_measure(xhat, M1, M2, p1, p2, m: Component):
    """|e_m(xhat) . (M1 p1 + M2 p2)| for far-field matrix cells M1, M2.

    ``M1`` and ``M2`` are the 3x3 far-field matrices at ``(xhat, d1)`` and
    ``(xhat, d2)``.  Broadcasts over leading axes.
    """
    theta, _ = cartesian_to_spherical(xhat)
    _check_off_pole(theta, POLE_BAND)
    e = measurement_vector(xhat, m)
    field_ = np.einsum("...ij,...j->...i", M1, np.asarray(p1, dtype=float)) + np.einsum(
        "...ij,...j->...i", M2, np.asarray(p2, dtype=float)
    )
    return np.abs(np.sum(e * field_, axis=-1))


@dataclass(frozen=True)
class Incident:
    """Superposition of two plane waves, E^i(., d1) p1 + E^i(., d2) p2."""

    d1: tuple[float, float, float]
    d2: tuple[float, float, float]
    p1: tuple[float, float, float]
    p2: tuple[float, float, float]

    def __post_init__(self):
        for name in ("d1", "d2"):
            unit(getattr(self, name), tol=1e-9)

    @classmethod
    def single(cls, d, p) -> "Incident":
        d = tuple(float(v) for v in d)
        return cls(d, d, tuple(float(v) for v in p), (0.0, 0.0, 0.0))

    @property
    def is_single_wave(self) -> bool:
        """True when the incident is (up to linearity) a single plane wave."""
        same_d = np.allclose(self.d1, self.d2, atol=1e-12)
        return same_d or not np.any(self.p1) or not np.any(self.p2)

    def waves(self) -> list[tuple[tuple, tuple]]:
        return [(self.d1, self.p1), (self.d2, self.p2)]

    def mirrored(self, axis: int) -> "Incident":
        """Reflect directions and polarizations through the plane x_axis = 0."""

        def flip(v):
            v = list(v)
            v[axis] = -v[axis]
            return tuple(v)

        return Incident(flip(self.d1), flip(self.d2), flip(self.p1), flip(self.p2))


def default_incidents(n_pairs: int = 6, seed: int = 0) -> list[Incident]:
    """Random direction pairs, each with two transverse polarization pairs."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_pairs):
        d1, d2 = normalize(rng.normal(size=(2, 3)))
        u1, v1 = transverse_basis(d1)
        u2, v2 = transverse_basis(d2)
        a1, a2 = rng.uniform(0, 2 * np.pi, size=2)
        q1 = np.cos(a1) * u1 + np.sin(a1) * v1
        q2 = np.cos(a2) * u2 + np.sin(a2) * v2
        r1 = np.cross(d1, q1)
        r2 = np.cross(d2, q2)
        for pa, pb in ((q1, q2), (r1, r2)):
            out.append(Incident(tuple(d1), tuple(d2), tuple(pa), tuple(pb)))
    return out


@dataclass(frozen=True)
class MeasurementGrid:
    """Gauss-Legendre nodes in cos(theta) times uniform nodes in phi."""

    n_theta: int = 16
    n_phi: int = 32
    pole_band: float = POLE_BAND
    theta: np.ndarray = field(init=False, repr=False, compare=False)
    phi: np.ndarray = field(init=False, repr=False, compare=False)
    weights_theta: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_theta < 1 or self.n_phi < 1:
            raise ValueError("grid counts must be positive")
        x, w = np.polynomial.legendre.leggauss(self.n_theta)
        theta = np.arccos(x[::-1])
        _check_off_pole(theta, self.pole_band)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "weights_theta", w[::-1])
        object.__setattr__(self, "phi", 2 * np.pi * np.arange(self.n_phi) / self.n_phi)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_theta, self.n_phi)

    def angles(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened (theta, phi), theta-major."""
        T, P = np.meshgrid(self.theta, self.phi, indexing="ij")
        return T.ravel(), P.ravel()

    def directions(self) -> np.ndarray:
        return spherical_to_cartesian(*self.angles())

    def weights(self) -> np.ndarray:
        """Quadrature weights on the unit sphere (sum to 4 pi)."""
        w = np.outer(self.weights_theta, np.full(self.n_phi, 2 * np.pi / self.n_phi))
        return w.ravel()

    def frames(self) -> tuple[np.ndarray, np.ndarray]:
        return tangent_frame(*self.angles())

    def spec(self) -> dict:
        return {"n_theta": self.n_theta, "n_phi": self.n_phi, "pole_band": self.pole_band}


@dataclass(frozen=True)
class PhaselessRecord:
    """One phaseless measurement with its full index."""

    xhat: tuple[float, float, float]
    d1: tuple[float, float, float]
    d2: tuple[float, float, float]
    p1: tuple[float, float, float]
    p2: tuple[float, float, float]
    m: Component
    value: float

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("phaseless value must be nonnegative")
        theta, _ = cartesian_to_spherical(self.xhat)
        _check_off_pole(theta, POLE_BAND)

    def key(self) -> tuple:
        return (self.xhat, self.d1, self.d2, self.p1, self.p2, self.m)


def phaseless_table(
    grid: MeasurementGrid, incidents: Sequence[Incident], far_fields
) -> np.ndarray:
    """Phaseless data array of shape (n_dirs, n_incidents, 2).

    ``far_fields(d, p)`` returns E^inf(xhat, d) p on ``grid.directions()``
    as an array (n_dirs, 3).  The last axis is ordered (phi, theta).
    """
    e_phi, e_theta = grid.frames()
    out = np.empty((grid.n_theta * grid.n_phi, len(incidents), 2))
    for j, inc in enumerate(incidents):
        total = far_fields(inc.d1, inc.p1) + far_fields(inc.d2, inc.p2)
        out[:, j, 0] = np.abs(np.sum(e_phi * total, axis=-1))
        out[:, j, 1] = np.abs(np.sum(e_theta * total, axis=-1))
    return out
