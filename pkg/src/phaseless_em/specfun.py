"""Spherical Bessel, Riccati-Bessel and Legendre tables.

The spherical Bessel functions of the first kind are computed by Miller's
downward recurrence on the ratio j_n / j_{n-1}, normalized by whichever of the
closed forms j_0 or j_1 is larger in modulus.  The second kind is computed by
upward recurrence, which is stable for y_n.  Arguments may be complex for the
first kind (needed inside lossy dielectric spheres).

Associated Legendre functions include the Condon-Shortley phase (-1)^m.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import WaveContext


def _start_order(n_max: int, az: float) -> int:
    base = max(n_max, int(math.ceil(az)))
    return base + 16 + int(8 * math.sqrt(base + 1))


def _j_first_kind(n_max: int, z) -> np.ndarray:
    """j_0..j_{n_max} at a single (real or complex) argument, z != 0."""
    z = complex(z) if np.iscomplexobj(z) else float(z)
    az = abs(z)
    if az == 0:
        raise ValueError("argument must be nonzero")
    top = _start_order(n_max, az)
    # ratios[n] = j_n / j_{n-1}, n = 1..top
    ratios = np.empty(top + 1, dtype=complex if isinstance(z, complex) else float)
    r = z / (2 * top + 3)
    for n in range(top, 0, -1):
        r = 1.0 / ((2 * n + 1) / z - r)
        ratios[n] = r
    if isinstance(z, complex):
        sin, cos = np.sin(z), np.cos(z)
    else:
        sin, cos = math.sin(z), math.cos(z)
    if az < 0.5:
        # series for small arguments, avoids cancellation in j_1
        j0 = _j_small(0, z)
        j1 = _j_small(1, z)
    else:
        j0 = sin / z
        j1 = sin / z**2 - cos / z
    out = np.empty(n_max + 1, dtype=ratios.dtype)
    if abs(j0) >= abs(j1):
        out[0] = j0
        for n in range(1, n_max + 1):
            out[n] = out[n - 1] * ratios[n]
    else:
        # j_0 from its closed form keeps relative accuracy near its zeros
        out[0] = j0
        if n_max >= 1:
            out[1] = j1
        for n in range(2, n_max + 1):
            out[n] = out[n - 1] * ratios[n]
    return out


def _j_small(n: int, z, terms: int = 20):
    """Power series of j_n for |z| < 1."""
    pref = z**n / math.prod(range(1, 2 * n + 2, 2))
    s = 0.0
    term = 1.0
    for m in range(terms):
        s += term
        term *= -(z * z / 2) / ((m + 1) * (2 * n + 2 * m + 3))
    return pref * s


def _y_second_kind(n_max: int, x: float) -> np.ndarray:
    out = np.empty(n_max + 1)
    out[0] = -math.cos(x) / x
    if n_max >= 1:
        out[1] = -math.cos(x) / x**2 - math.sin(x) / x
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, n_max):
            out[n + 1] = (2 * n + 1) / x * out[n] - out[n - 1]
    if not np.all(np.isfinite(out)):
        raise OverflowError(f"y_n({x}) overflows below order {n_max}")
    return out


def _derivative(f: np.ndarray, z) -> np.ndarray:
    """f'_n for n = 0..len(f)-2 from f_0..f_{N}: f'_n = f_{n-1} - (n+1)/z f_n."""
    n = np.arange(1, len(f) - 1)
    d = np.empty(len(f) - 1, dtype=f.dtype)
    d[0] = -f[1]
    d[1:] = f[n - 1] - (n + 1) / z * f[n]
    return d


@dataclass(frozen=True)
class BesselTable:
    """Spherical Bessel values for orders 0..n_max at one argument."""

    x: complex | float
    j: np.ndarray
    jp: np.ndarray
    y: np.ndarray | None = None
    yp: np.ndarray | None = None

    @property
    def n_max(self) -> int:
        return len(self.j) - 1

    @property
    def h(self) -> np.ndarray:
        return self.j + 1j * self.y

    @property
    def hp(self) -> np.ndarray:
        return self.jp + 1j * self.yp


def bessel_table(n_max: int, x) -> BesselTable:
    """j_n, j_n' (and y_n, y_n' for real positive x) for n = 0..n_max."""
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    j = _j_first_kind(n_max + 1, x)
    jp = _derivative(j, x)
    if np.iscomplexobj(x) and np.imag(x) != 0:
        return BesselTable(x, j[:-1], jp)
    x = float(np.real(x))
    if x <= 0:
        raise ValueError("real argument must be positive")
    if not np.all(np.isfinite(j)):
        raise OverflowError(f"j_n({x}) out of range below order {n_max}")
    y = _y_second_kind(n_max + 1, x)
    yp = _derivative(y, x)
    return BesselTable(x, j[:-1].real, jp.real, y[:-1], yp)


def spherical_bessel(n: int, x: float) -> tuple[float, float, float, float]:
    """(j_n, j_n', y_n, y_n') at a real positive argument."""
    t = bessel_table(n, x)
    return t.j[n], t.jp[n], t.y[n], t.yp[n]


@dataclass(frozen=True)
class RiccatiTable:
    """psi_n = x j_n(x), xi_n = x h_n^(1)(x) and derivatives, n = 0..n_max."""

    x: complex | float
    psi: np.ndarray
    psip: np.ndarray
    xi: np.ndarray | None
    xip: np.ndarray | None


def riccati_table(n_max: int, x) -> RiccatiTable:
    t = bessel_table(n_max, x)
    psi = x * t.j
    psip = t.j + x * t.jp
    if t.y is None:
        return RiccatiTable(x, psi, psip, None, None)
    h, hp = t.h, t.hp
    return RiccatiTable(x, psi, psip, x * h, h + x * hp)


def riccati_bessel(n: int, x: float) -> tuple[float, float, complex, complex]:
    """(psi_n, psi_n', xi_n, xi_n') at a real positive argument."""
    t = riccati_table(n, x)
    return t.psi[n], t.psip[n], t.xi[n], t.xip[n]


@dataclass(frozen=True)
class AdmissibilityReport:
    """Outcome of the Maxwell-eigenvalue screening of a PEC ball."""

    admissible: bool
    margin: float
    order: int
    condition: str
    kr: float
    n_max: int
    tol: float

    def as_dict(self) -> dict:
        return {
            "admissible": self.admissible,
            "margin": self.margin,
            "order": self.order,
            "condition": self.condition,
            "kr": self.kr,
            "n_max": self.n_max,
            "tol": self.tol,
        }


def eigen_margins(kr: float, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Scale-free distances of j_n(kr) and psi_n'(kr) from zero.

    For an oscillating Riccati-Bessel function u, |u| / sqrt(u^2 + u'^2)
    behaves like the distance in argument to the nearest zero, and stays of
    order kr/n where u is monotone.  ``psi_n'`` equals j_n + kr j_n'.
    """
    t = riccati_table(n_max, kr)
    n = np.arange(n_max + 1)
    psi, psip = t.psi, t.psip
    psipp = (n * (n + 1) / kr**2 - 1.0) * psi
    with np.errstate(invalid="ignore", divide="ignore"):
        m_j = np.abs(psi) / np.hypot(psi, psip)
        m_d = np.abs(psip) / np.hypot(psip, psipp)
    return np.nan_to_num(m_j), np.nan_to_num(m_d)


def maxwell_eigenvalue_free(
    ctx: WaveContext, r: float, n_max: int | None = None, tol: float = 1e-8
) -> AdmissibilityReport:
    """Check j_n(kr) != 0 and j_n(kr) + kr j_n'(kr) != 0 for n = 0..n_max.

    A finite scan is a numerical surrogate for the condition over all n.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    kr = ctx.k * r
    if n_max is None:
        n_max = int(math.ceil(kr)) + 20
    m_j, m_d = eigen_margins(kr, n_max)
    nj, nd = int(np.argmin(m_j)), int(np.argmin(m_d))
    if m_j[nj] <= m_d[nd]:
        margin, order, cond = float(m_j[nj]), nj, "j_n"
    else:
        margin, order, cond = float(m_d[nd]), nd, "j_n + kr j_n'"
    return AdmissibilityReport(margin > tol, margin, order, cond, kr, n_max, tol)


@dataclass(frozen=True)
class LegendreTable:
    """P_n^m(cos theta) and d/dtheta P_n^m, shape (n_max+1, m_max+1, ...)."""

    theta: np.ndarray
    p: np.ndarray
    dp: np.ndarray


def legendre_table(n_max: int, theta, m_max: int | None = None) -> LegendreTable:
    """Associated Legendre functions with the Condon-Shortley phase."""
    theta = np.asarray(theta, dtype=float)
    if m_max is None:
        m_max = n_max
    x, s = np.cos(theta), np.sin(theta)
    s = np.where(np.abs(x) == 1.0, 0.0, s)  # exact zeros at the poles
    P = np.zeros((n_max + 2, m_max + 2) + theta.shape)
    pmm = np.ones_like(x)
    for m in range(0, min(m_max + 1, n_max + 1) + 1):
        if m > n_max:
            break
        if m > 0:
            pmm = -(2 * m - 1) * s * pmm
        P[m, m] = pmm
        if m + 1 <= n_max:
            P[m + 1, m] = x * (2 * m + 1) * pmm
        for n in range(m + 2, n_max + 1):
            P[n, m] = ((2 * n - 1) * x * P[n - 1, m] - (n + m - 1) * P[n - 2, m]) / (n - m)
    dP = np.zeros((n_max + 1, m_max + 1) + theta.shape)
    for n in range(n_max + 1):
        for m in range(0, min(n, m_max) + 1):
            upper = P[n, m + 1] if m + 1 <= n else 0.0
            if m == 0:
                lower = -P[n, 1] / (n * (n + 1)) if n >= 1 else 0.0
            else:
                lower = P[n, m - 1]
            dP[n, m] = 0.5 * (upper - (n + m) * (n - m + 1) * lower)
    return LegendreTable(theta, P[: n_max + 1, : m_max + 1], dP)


def angular_functions(n_max: int, mu) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """pi_n = P_n'(mu), tau_n = mu pi_n - (1 - mu^2) pi_n' and pi_n', n = 0..n_max.

    Arrays have shape (n_max + 1,) + mu.shape; row 0 is zero.
    """
    mu = np.asarray(mu, dtype=float)
    pi = np.zeros((n_max + 1,) + mu.shape)
    dpi = np.zeros_like(pi)
    if n_max >= 1:
        pi[1] = 1.0
    for n in range(2, n_max + 1):
        a = (2 * n - 1) / (n - 1)
        b = n / (n - 1)
        pi[n] = a * mu * pi[n - 1] - b * pi[n - 2]
        dpi[n] = a * (pi[n - 1] + mu * dpi[n - 1]) - b * dpi[n - 2]
    tau = mu * pi - (1 - mu**2) * dpi
    return pi, tau, dpi
