"""Partial-wave solution for a single sphere.

Three boundary conditions are supported: perfect conductor, constant
impedance lambda >= 0 in the form nu x curl E - i lambda (nu x E) x nu = 0,
and a homogeneous dielectric with relative index n (mu = 1 inside and out).

Coefficient convention (scattered / incident amplitude per mode):

* ``a_n`` belongs to the modes whose electric field is tangential on spheres
  (E ~ M_n).  For a perfect conductor a_n = -psi_n(ka) / xi_n(ka).
* ``b_n`` belongs to the modes with a radial electric field (E ~ N_n).  For a
  perfect conductor b_n = -psi_n'(ka) / xi_n'(ka).

In Bohren-Huffman notation a_n = -b_n^BH and b_n = -a_n^BH, so the lossless
S-matrix entries 1 + 2 a_n and 1 + 2 b_n are unimodular.

For a sphere at the origin and mu = xhat . d, the far-field matrix is the
reflection-symmetric tensor

    E^inf(xhat, d) = A(mu) P_xhat P_d + V(mu) (d - mu xhat)(xhat - mu d)^T

with P_u = I - u u^T, A = sum c_n (b_n pi_n + a_n tau_n) and
V = sum c_n (b_n pi_n' - a_n (pi_n + mu pi_n')), c_n = (2n+1)/(n(n+1)).
It has no singularity in forward or backward direction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import WaveContext
from .errors import ResonanceError
from .specfun import angular_functions, riccati_table

DENOMINATOR_TOL = 1e-13


@dataclass(frozen=True)
class PEC:
    pass


@dataclass(frozen=True)
class Impedance:
    lam: float

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("impedance lambda must be nonnegative")


@dataclass(frozen=True)
class Dielectric:
    n: complex

    def __post_init__(self):
        n = complex(self.n)
        if n.real <= 0 or n.imag < 0:
            raise ValueError("refractive index needs Re n > 0 and Im n >= 0")


BoundaryCondition = PEC | Impedance | Dielectric


@dataclass(frozen=True)
class SphereObstacle:
    center: tuple[float, float, float]
    radius: float
    bc: BoundaryCondition = field(default_factory=PEC)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def moved(self, center) -> "SphereObstacle":
        return SphereObstacle(tuple(center), self.radius, self.bc)

    def at_origin(self) -> "SphereObstacle":
        return self.moved((0.0, 0.0, 0.0))


@dataclass(frozen=True)
class MieCoefficients:
    a: np.ndarray
    b: np.ndarray
    k: float
    radius: float

    @property
    def n_max(self) -> int:
        return len(self.a)

    @property
    def orders(self) -> np.ndarray:
        return np.arange(1, self.n_max + 1)

    def swapped(self) -> "MieCoefficients":
        return MieCoefficients(self.b, self.a, self.k, self.radius)


def wiscombe_order(ka: float) -> int:
    """Truncation order ceil(ka + 4.05 (ka)^(1/3) + 8)."""
    return int(math.ceil(ka + 4.05 * ka ** (1.0 / 3.0) + 8))


def _ratio(num, den):
    if np.any(np.abs(den) < DENOMINATOR_TOL):
        raise ResonanceError("partial-wave denominator vanishes")
    return num / den


def mie_coefficients(
    sphere: SphereObstacle, ctx: WaveContext, n_max: int | None = None
) -> MieCoefficients:
    x = ctx.k * sphere.radius
    if n_max is None:
        n_max = wiscombe_order(x)
    t = riccati_table(n_max, x)
    psi, psip, xi, xip = (v[1:] for v in (t.psi, t.psip, t.xi, t.xip))
    bc = sphere.bc
    if isinstance(bc, PEC):
        a = _ratio(-psi, xi)
        b = _ratio(-psip, xip)
    elif isinstance(bc, Impedance):
        eta = bc.lam / ctx.k
        a = _ratio(-(psip + 1j * eta * psi), xip + 1j * eta * xi)
        b = _ratio(-(psi - 1j * eta * psip), xi - 1j * eta * xip)
    elif isinstance(bc, Dielectric):
        m = complex(bc.n)
        inner = riccati_table(n_max, m * x if m.imag else m.real * x)
        pm, pmp = inner.psi[1:], inner.psip[1:]
        a = _ratio(-(pm * psip - m * psi * pmp), pm * xip - m * xi * pmp)
        b = _ratio(-(m * pm * psip - psi * pmp), m * pm * xip - xi * pmp)
    else:
        raise TypeError(f"unsupported boundary condition {bc!r}")
    return MieCoefficients(np.asarray(a, complex), np.asarray(b, complex), ctx.k, sphere.radius)


def _as_dirs(v):
    return np.asarray(v, dtype=float)


def far_field_matrix(coeffs: MieCoefficients, xhat, d) -> np.ndarray:
    """E^inf(xhat, d) of an origin-centered sphere, shape broadcast(xhat, d)[:-1] + (3, 3)."""
    xhat, d = np.broadcast_arrays(_as_dirs(xhat), _as_dirs(d))
    mu = np.clip(np.sum(xhat * d, axis=-1), -1.0, 1.0)
    pi, tau, dpi = angular_functions(coeffs.n_max, mu)
    n = coeffs.orders
    c = (2 * n + 1) / (n * (n + 1))
    ca, cb = c * coeffs.a, c * coeffs.b
    A = np.tensordot(cb, pi[1:], axes=1) + np.tensordot(ca, tau[1:], axes=1)
    V = np.tensordot(cb, dpi[1:], axes=1) - np.tensordot(ca, pi[1:] + mu * dpi[1:], axes=1)
    eye = np.eye(3)
    Px = eye - xhat[..., :, None] * xhat[..., None, :]
    Pd = eye - d[..., :, None] * d[..., None, :]
    u = d - mu[..., None] * xhat
    w = xhat - mu[..., None] * d
    return A[..., None, None] * (Px @ Pd) + V[..., None, None] * (u[..., :, None] * w[..., None, :])


def cross_matrix(v) -> np.ndarray:
    """Matrix [v]_x with [v]_x p = v x p."""
    v = np.asarray(v, dtype=float)
    z = np.zeros(v.shape[:-1])
    return np.stack(
        [
            np.stack([z, -v[..., 2], v[..., 1]], axis=-1),
            np.stack([v[..., 2], z, -v[..., 0]], axis=-1),
            np.stack([-v[..., 1], v[..., 0], z], axis=-1),
        ],
        axis=-2,
    )


def magnetic_far_field_matrix(coeffs: MieCoefficients, xhat, d) -> np.ndarray:
    """H^inf(xhat, d) from the magnetic partial-wave series.

    The magnetic field expands like the electric one with the mode roles
    exchanged, driven by the incident amplitude ik d x p.
    """
    xhat, d = np.broadcast_arrays(_as_dirs(xhat), _as_dirs(d))
    return far_field_matrix(coeffs.swapped(), xhat, d) @ cross_matrix(d)


def sphere_far_field_matrix(
    sphere: SphereObstacle, coeffs: MieCoefficients, xhat, d, ctx: WaveContext
) -> np.ndarray:
    """Far-field matrix of a sphere at an arbitrary center."""
    M = far_field_matrix(coeffs, xhat, d)
    if any(sphere.center):
        return translated_far_field(M, sphere.center, xhat, d, ctx)
    return M


def translated_far_field(M, z, xhat, d, ctx: WaveContext) -> np.ndarray:
    """Far field of the obstacle shifted by ``z``: exp(ik (d - xhat) . z) M."""
    xhat, d = np.broadcast_arrays(_as_dirs(xhat), _as_dirs(d))
    phase = np.exp(1j * ctx.k * np.sum((d - xhat) * np.asarray(z, dtype=float), axis=-1))
    return phase[..., None, None] * M


def near_scattered_field(
    sphere: SphereObstacle, coeffs: MieCoefficients, x, d, p, ctx: WaveContext
) -> tuple[np.ndarray, np.ndarray]:
    """Scattered (E^s, H^s) at exterior points ``x`` (shape (..., 3))."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    p = np.asarray(p, dtype=float)
    center = np.asarray(sphere.center)
    rel = x - center
    r = np.linalg.norm(rel, axis=-1)
    if np.any(r <= sphere.radius * (1 - 1e-12)):
        raise ValueError("field point inside the sphere")
    p_perp = p - np.dot(p, d) * d
    amp = np.linalg.norm(p_perp)
    if amp == 0.0:
        z = np.zeros(x.shape, dtype=complex)
        return z, z.copy()
    e1 = p_perp / amp
    e2 = np.cross(d, e1)
    R = np.stack([e1, e2, d])  # rows: local axes
    loc = rel @ R.T
    theta = np.arccos(np.clip(loc[..., 2] / r, -1.0, 1.0))
    phi = np.arctan2(loc[..., 1], loc[..., 0])
    E0 = 1j * ctx.k * amp * np.exp(1j * ctx.k * np.dot(d, center))

    n_max = coeffs.n_max
    n = coeffs.orders
    rho = ctx.k * r
    flat = rho.ravel()
    zn = np.empty((n_max, flat.size), dtype=complex)
    dzn = np.empty_like(zn)  # (rho z_n)' / rho
    for i, rr in enumerate(flat):
        t = riccati_table(n_max, rr)
        zn[:, i] = t.xi[1:] / rr
        dzn[:, i] = t.xip[1:] / rr
    zn = zn.reshape((n_max,) + rho.shape)
    dzn = dzn.reshape((n_max,) + rho.shape)
    pi, tau, _ = angular_functions(n_max, np.cos(theta))
    pi, tau = pi[1:], tau[1:]

    En = (1j ** n) * (2 * n + 1) / (n * (n + 1))
    shp = (n_max,) + (1,) * rho.ndim
    En = En.reshape(shp)
    a = coeffs.a.reshape(shp)
    b = coeffs.b.reshape(shp)
    nn1 = (n * (n + 1)).reshape(shp)
    st, cp, sp = np.sin(theta), np.cos(phi), np.sin(phi)

    # E = sum E_n (a M_o1n - i b N_e1n)
    Er = np.sum(En * (-1j * b) * cp * nn1 * st * pi * zn / rho, axis=0)
    Et = np.sum(En * (a * cp * pi * zn - 1j * b * cp * tau * dzn), axis=0)
    Ep = np.sum(En * (-a * sp * tau * zn + 1j * b * sp * pi * dzn), axis=0)
    # H = sum E_n (-i a N_o1n - b M_e1n)
    Hr = np.sum(En * (-1j * a) * sp * nn1 * st * pi * zn / rho, axis=0)
    Ht = np.sum(En * (-1j * a * sp * tau * dzn + b * sp * pi * zn), axis=0)
    Hp = np.sum(En * (-1j * a * cp * pi * dzn + b * cp * tau * zn), axis=0)

    ct = np.cos(theta)
    er = np.stack([st * cp, st * sp, ct], axis=-1)
    et = np.stack([ct * cp, ct * sp, -st], axis=-1)
    ep = np.stack([-sp, cp, np.zeros_like(cp)], axis=-1)

    def assemble(fr, ft, fp):
        local = fr[..., None] * er + ft[..., None] * et + fp[..., None] * ep
        return E0 * (local @ R)

    return assemble(Er, Et, Ep), assemble(Hr, Ht, Hp)


def cross_sections(coeffs: MieCoefficients) -> tuple[float, float]:
    """(extinction, scattering) cross sections from the coefficients."""
    n = coeffs.orders
    k2 = coeffs.k**2
    ext = -2 * np.pi / k2 * np.sum((2 * n + 1) * np.real(coeffs.a + coeffs.b))
    sca = 2 * np.pi / k2 * np.sum((2 * n + 1) * (np.abs(coeffs.a) ** 2 + np.abs(coeffs.b) ** 2))
    return float(ext), float(sca)
