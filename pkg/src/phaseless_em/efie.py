"""Method-of-moments EFIE for perfectly conducting bodies.

Galerkin testing with RWG functions.  With G = exp(ikR) / (4 pi R) the
scattered field of a surface current J is

    E^s = ik (I + grad div / k^2) int G J,   H^s = curl int G J,

so the impedance matrix is

    Z_mn = ik int int [f_m . f_n - (div f_m)(div f_n) / k^2] G

and Z I = -<f_m, E^i>.  On near triangle pairs the static part 1/(4 pi R)
of the inner integral is integrated in closed form and only the bounded
remainder is left to quadrature.

Assembly runs over chunks of test triangles; partial blocks are added to Z in
a fixed chunk order, so results do not depend on the number of threads.
"""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse

from .core import WaveContext, incident_electric
from .errors import SingularMatrixError, TooCloseError
from .mesh import RwgBasis, TriMesh, gauss_points, rwg_basis, subdivided_rule

log = logging.getLogger(__name__)

FOUR_PI = 4 * np.pi
#: triangle pairs closer than this many triangle diameters get singularity extraction
NEAR_FACTOR = 2.5
CHUNK = 48


def static_potentials(r, corners) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form int_T 1/|r - r'| dS' and int_T r'/|r - r'| dS'.

    ``r`` has shape (N, 3) and ``corners`` (N, 3, 3); returns (N,) and (N, 3).
    """
    r = np.asarray(r, dtype=float)
    c = np.asarray(corners, dtype=float)
    cr = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    n = cr / np.linalg.norm(cr, axis=1, keepdims=True)
    h = np.einsum("ij,ij->i", r - c[:, 0], n)
    rho = r - h[:, None] * n
    ah = np.abs(h)
    I0 = np.zeros(len(r))
    Iv = np.zeros((len(r), 3))
    for i in range(3):
        a, b = c[:, i], c[:, (i + 1) % 3]
        lhat = b - a
        lhat /= np.linalg.norm(lhat, axis=1, keepdims=True)
        uhat = np.cross(lhat, n)
        lp = np.einsum("ij,ij->i", b - rho, lhat)
        lm = np.einsum("ij,ij->i", a - rho, lhat)
        t = np.einsum("ij,ij->i", a - rho, uhat)
        r02 = t * t + h * h
        rp = np.sqrt(r02 + lp * lp)
        rm = np.sqrt(r02 + lm * lm)
        with np.errstate(divide="ignore", invalid="ignore"):
            # log(R + l) evaluated without cancellation for l < 0
            logp = np.where(lp >= 0, np.log(rp + lp), np.log(r02) - np.log(rp - lp))
            logm = np.where(lm >= 0, np.log(rm + lm), np.log(r02) - np.log(rm - lm))
            f2 = np.where(r02 > 1e-30, logp - logm, 0.0)
            at = np.arctan2(t * lp, r02 + ah * rp) - np.arctan2(t * lm, r02 + ah * rm)
        I0 += t * f2 - ah * at
        Iv += 0.5 * uhat * (r02 * f2 + lp * rp - lm * rm)[:, None]
    return I0, Iv + rho * I0[:, None]


@dataclass(frozen=True, eq=False)
class _Geometry:
    mesh: TriMesh
    basis: RwgBasis
    coef: np.ndarray  # (F, 3) signed edge lengths
    xt: np.ndarray  # test points (F, nt, 3)
    wt: np.ndarray
    xs: np.ndarray  # source points (F, ns, 3)
    ws: np.ndarray


def _geometry(mesh: TriMesh, basis: RwgBasis, test_order: int, source_order: int) -> _Geometry:
    xt, wt = gauss_points(mesh.corners, test_order)
    xs, ws = gauss_points(mesh.corners, source_order)
    return _Geometry(mesh, basis, basis.local_coefficients(), xt, wt, xs, ws)


def _near_pairs(mt: TriMesh, ms: TriMesh, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ct, cs = mt.centroids[rows], ms.centroids
    dist = np.linalg.norm(ct[:, None, :] - cs[None, :, :], axis=2)
    size = np.maximum(mt.diameters[rows][:, None], ms.diameters[None, :])
    p, q = np.nonzero(dist < NEAR_FACTOR * size)
    return p, q


def _chunk_block(gt: _Geometry, gs: _Geometry, rows: np.ndarray, k: float) -> np.ndarray:
    """K[p, q, i, j] for test triangles ``rows`` against every source triangle."""
    mt, ms = gt.mesh, gs.mesh
    ra, wa = gt.xt[rows], gt.wt[rows]  # (c, nt, 3)
    rb, wb = gs.xs, gs.ws  # (F, ns, 3)
    diff = ra[:, :, None, None, :] - rb[None, None, :, :, :]
    R = np.sqrt(np.einsum("...d,...d->...", diff, diff))
    # coincident points (equal test and source rules) only occur on self pairs,
    # where the static part is subtracted below; keep the limit of the remainder
    with np.errstate(divide="ignore", invalid="ignore"):
        G = np.where(R > 0, np.exp(1j * k * R) / R, 1j * k)
    WG = (wa[:, :, None, None] * wb[None, None]) * G / FOUR_PI
    S0 = WG.sum(axis=(1, 3))
    Sr = np.einsum("pafb,pad->pfd", WG, ra)
    Srp = np.einsum("pafb,fbd->pfd", WG, rb)
    Srr = np.einsum("pafb,pafb->pf", WG, np.einsum("pad,fbd->pafb", ra, rb))

    p, q = _near_pairs(mt, ms, rows)
    if len(p):
        nt = ra.shape[1]
        pts = ra[p].reshape(-1, 3)
        tri = np.repeat(ms.corners[q], nt, axis=0)
        I0, I1 = static_potentials(pts, tri)
        I0 = I0.reshape(len(p), nt) / FOUR_PI
        I1 = I1.reshape(len(p), nt, 3) / FOUR_PI
        # remove the quadrature of the static kernel on the same pairs
        dq = ra[p][:, :, None, :] - rb[q][:, None, :, :]
        Rq = np.linalg.norm(dq, axis=-1)
        with np.errstate(divide="ignore"):
            inv = wb[q][:, None, :] * np.where(Rq > 0, 1 / Rq, 0.0) / FOUR_PI  # (P, nt, ns)
        I0 = I0 - inv.sum(axis=2)
        I1 = I1 - np.einsum("pab,pbd->pad", inv, rb[q])
        w = wa[p]
        S0[p, q] += np.einsum("pa,pa->p", w, I0)
        Sr[p, q] += np.einsum("pa,pa,pad->pd", w, I0, ra[p])
        Srp[p, q] += np.einsum("pa,pad->pd", w, I1)
        Srr[p, q] += np.einsum("pa,pad,pad->p", w, ra[p], I1)

    vp = mt.corners[rows]  # free vertex of local function i is corner i
    vq = ms.corners
    At = mt.areas[rows][:, None]
    As = ms.areas[None, :]
    K = (
        Srr[:, :, None, None]
        - np.einsum("fjd,pfd->pfj", vq, Sr)[:, :, None, :]
        - np.einsum("pid,pfd->pfi", vp, Srp)[:, :, :, None]
        + np.einsum("pid,fjd->pfij", vp, vq) * S0[:, :, None, None]
    ) / (4 * At * As)[:, :, None, None]
    K -= (S0 / (k * k * At * As))[:, :, None, None]
    return K


@dataclass(frozen=True, eq=False)
class _LocalMap:
    mesh: TriMesh
    basis: RwgBasis

    @property
    def coef(self) -> np.ndarray:
        return self.basis.local_coefficients()


def _incidence(g: _Geometry | _LocalMap) -> scipy.sparse.csr_matrix:
    F = g.mesh.n_triangles
    rows = np.arange(3 * F)
    return scipy.sparse.csr_matrix(
        (g.coef.ravel(), (rows, g.basis.tri_edge.ravel())), shape=(3 * F, g.basis.size)
    )


def assemble_block(gt: _Geometry, gs: _Geometry, k: float, threads: int = 1) -> np.ndarray:
    """Impedance block with test functions of ``gt`` and sources of ``gs``."""
    F = gt.mesh.n_triangles
    Cs = _incidence(gs)
    chunks = [np.arange(i, min(i + CHUNK, F)) for i in range(0, F, CHUNK)]

    def work(rows):
        K = _chunk_block(gt, gs, rows, k)
        c = len(rows)
        Kf = K.transpose(0, 2, 1, 3).reshape(3 * c, -1)
        Y = np.asarray((Cs.T @ Kf.T).T)  # (3c, E_s)
        return rows, Y

    Z = np.zeros((gt.basis.size, gs.basis.size), dtype=complex)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(work, chunks))
    else:
        results = map(work, chunks)
    for rows, Y in results:
        edges = gt.basis.tri_edge[rows].ravel()
        np.add.at(Z, edges, gt.coef[rows].ravel()[:, None] * Y)
    return 1j * k * Z


_BLOCK_CACHE: dict = {}
_BLOCK_CACHE_MAX = 8


def _body_key(mesh: TriMesh, k: float, orders) -> tuple:
    return (mesh.vertices.tobytes(), mesh.triangles.tobytes(), float(k), tuple(orders))


@dataclass(eq=False)
class EfieSystem:
    """Factorized EFIE system over the RWG functions of a (multi-body) mesh."""

    mesh: TriMesh
    basis: RwgBasis
    ctx: WaveContext
    Z: np.ndarray
    lu: tuple = field(repr=False)
    test_order: int = 3
    source_order: int = 4
    rhs_order: int = 7
    raw_asymmetry: float = 0.0

    @property
    def size(self) -> int:
        return self.basis.size

    @cached_property
    def incidence(self) -> scipy.sparse.csr_matrix:
        """Sparse map from local (triangle, corner) functions to RWG edges."""
        return _incidence(_LocalMap(self.mesh, self.basis))

    def condition_number(self) -> float:
        return float(np.linalg.cond(self.Z))

    def symmetry_residual(self) -> float:
        return float(np.abs(self.Z - self.Z.T).max() / np.abs(self.Z).max())


def assemble(
    mesh: TriMesh,
    ctx: WaveContext,
    test_order: int = 3,
    source_order: int = 4,
    rhs_order: int = 7,
    threads: int = 1,
    cache_bodies: bool = False,
) -> EfieSystem:
    """Assemble and LU-factorize the EFIE matrix of ``mesh``.

    Each body gets its own block; diagonal blocks are symmetrized (the two
    quadrature orders make the raw Galerkin block only approximately
    symmetric, see ``raw_asymmetry``) and off-diagonal blocks are mirrored.
    With ``cache_bodies`` the self-blocks of unchanged bodies are reused.
    """
    mesh.validate()
    k = ctx.k
    bodies = [mesh.body(b) for b in mesh.bodies]
    bases = [rwg_basis(b) for b in bodies]
    geoms = [_geometry(b, bs, test_order, source_order) for b, bs in zip(bodies, bases)]
    sizes = [bs.size for bs in bases]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    Z = np.zeros((offs[-1], offs[-1]), dtype=complex)
    asym = 0.0
    orders = (test_order, source_order)
    for i, gi in enumerate(geoms):
        key = _body_key(bodies[i], k, orders)
        hit = _BLOCK_CACHE.get(key) if cache_bodies else None
        if hit is None:
            B = assemble_block(gi, gi, k, threads)
            a = float(np.abs(B - B.T).max() / np.abs(B).max())
            hit = (0.5 * (B + B.T), a)
            if cache_bodies:
                if len(_BLOCK_CACHE) >= _BLOCK_CACHE_MAX:
                    _BLOCK_CACHE.pop(next(iter(_BLOCK_CACHE)))
                _BLOCK_CACHE[key] = hit
        Bsym, a = hit
        asym = max(asym, a)
        Z[offs[i] : offs[i + 1], offs[i] : offs[i + 1]] = Bsym
        for j in range(i + 1, len(geoms)):
            C = assemble_block(gi, geoms[j], k, threads)
            Z[offs[i] : offs[i + 1], offs[j] : offs[j + 1]] = C
            Z[offs[j] : offs[j + 1], offs[i] : offs[i + 1]] = C.T
    basis = rwg_basis(mesh)
    # the global basis must enumerate edges body by body in the same order
    if not np.allclose(basis.lengths, np.concatenate([b.lengths for b in bases])):
        raise ValueError("body ordering of the mesh does not match its RWG basis")
    lu = _factor(Z)
    log.debug("assembled EFIE system with %d unknowns", len(Z))
    return EfieSystem(mesh, basis, ctx, Z, lu, test_order, source_order, rhs_order, asym)


def _factor(Z):
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            lu, piv = scipy.linalg.lu_factor(Z, check_finite=True)
        except (scipy.linalg.LinAlgWarning, ValueError, np.linalg.LinAlgError) as exc:
            raise SingularMatrixError(str(exc)) from exc
    if np.any(np.abs(np.diag(lu)) == 0):
        raise SingularMatrixError("zero pivot in LU factorization")
    return lu, piv


@dataclass(frozen=True, eq=False)
class SurfaceCurrent:
    """RWG coefficients, one column per incident wave (or superposition)."""

    coefficients: np.ndarray  # (E,) or (E, n)
    system: EfieSystem
    incidents: tuple = ()

    def __add__(self, other: "SurfaceCurrent") -> "SurfaceCurrent":
        return SurfaceCurrent(self.coefficients + other.coefficients, self.system,
                              self.incidents + other.incidents)

    def __mul__(self, s) -> "SurfaceCurrent":
        return SurfaceCurrent(s * self.coefficients, self.system, self.incidents)

    __rmul__ = __mul__


def _local_current_data(system: EfieSystem, order: int, levels: int = 0):
    mesh = system.mesh
    if levels:
        bary, w = subdivided_rule(order, levels)
        pts = np.einsum("qi,fid->fqd", bary, mesh.corners)
        wts = mesh.areas[:, None] * w
    else:
        pts, wts = gauss_points(mesh.corners, order)
    return pts, wts


def _triangle_currents(system: EfieSystem, coeffs: np.ndarray, pts: np.ndarray):
    """Current J(y) at points ``pts`` (F, q, 3) and divergence per triangle."""
    b = system.basis
    mesh = system.mesh
    c = coeffs.reshape(b.size, -1)
    local = (b.local_coefficients()[:, :, None] * c[b.tri_edge])  # (F, 3, n)
    A = mesh.areas
    vert = mesh.corners  # (F, 3, 3)
    # J = sum_i local_i (y - v_i) / (2A)
    J = (
        np.einsum("fin,fqd->fqdn", local, pts)
        - np.einsum("fin,fid->fdn", local, vert)[:, None]
    ) / (2 * A[:, None, None, None])
    div = local.sum(axis=1) / A[:, None]  # (F, n)
    return J, div


def incident_rhs(system: EfieSystem, d, p) -> np.ndarray:
    """-<f_m, E^i(., d) p> for each RWG function."""
    pts, wts = gauss_points(system.mesh.corners, system.rhs_order)
    Ei = incident_electric(pts, d, p, system.ctx)  # (F, q, 3)
    vert = system.mesh.corners
    # integral of (y - v_i)/(2A) . E over each triangle for each corner i
    a = np.einsum("fq,fqd,fqd->f", wts, pts, Ei)
    bvec = np.einsum("fq,fqd->fd", wts, Ei)
    loc = (a[:, None] - np.einsum("fid,fd->fi", vert, bvec)) / (2 * system.mesh.areas[:, None])
    return -(system.incidence.T @ loc.ravel())


def solve(system: EfieSystem, d, p) -> SurfaceCurrent:
    V = incident_rhs(system, d, p)
    I = scipy.linalg.lu_solve(system.lu, V)
    if not np.all(np.isfinite(I)):
        raise SingularMatrixError("non-finite surface current")
    return SurfaceCurrent(I, system, ((tuple(d), tuple(p)),))


def solve_many(system: EfieSystem, waves) -> np.ndarray:
    """Coefficient matrix (E, n) for a sequence of (d, p) pairs."""
    if not len(waves):
        return np.zeros((system.size, 0), dtype=complex)
    V = np.stack([incident_rhs(system, d, p) for d, p in waves], axis=1)
    I = scipy.linalg.lu_solve(system.lu, V)
    if not np.all(np.isfinite(I)):
        raise SingularMatrixError("non-finite surface current")
    return I


def radiation_vectors(system: EfieSystem, xhat) -> np.ndarray:
    """N[x, m, :] = int f_m(y) exp(-ik xhat . y) dS(y), shape (n_dirs, E, 3)."""
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    pts, wts = gauss_points(system.mesh.corners, system.rhs_order)
    k = system.ctx.k
    ph = np.exp(-1j * k * np.einsum("xd,fqd->xfq", xhat, pts)) * wts[None]
    a = np.einsum("xfq,fqd->xfd", ph, pts)  # int y e dS
    b = ph.sum(axis=2)  # int e dS
    vert = system.mesh.corners
    loc = (a[:, :, None, :] - b[:, :, None, None] * vert[None]) / (
        2 * system.mesh.areas[None, :, None, None]
    )  # (x, F, 3 local, 3 xyz)
    C = system.incidence
    flat = loc.reshape(len(xhat), -1, 3).transpose(1, 0, 2).reshape(C.shape[0], -1)
    N = np.asarray(C.T @ flat).reshape(system.size, len(xhat), 3)
    return N.transpose(1, 0, 2)


def far_field_from_coefficients(system: EfieSystem, coeffs, xhat, N=None) -> np.ndarray:
    """E^inf at directions ``xhat`` for coefficient columns; shape (n_dirs, 3[, n])."""
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    if N is None:
        N = radiation_vectors(system, xhat)
    c = np.asarray(coeffs)
    A = np.einsum("xmd,m...->xd...", N, c)
    k = system.ctx.k
    radial = np.einsum("xd,xd...->x...", xhat, A)
    if A.ndim == 3:
        A = A - xhat[:, :, None] * radial[:, None, :]
    else:
        A = A - xhat * radial[:, None]
    return 1j * k / FOUR_PI * A


def far_field_from_currents(current: SurfaceCurrent, xhat) -> np.ndarray:
    """Radiation integral of the current, projected tangential to ``xhat``."""
    return far_field_from_coefficients(current.system, current.coefficients, xhat)


def magnetic_far_field_from_currents(current: SurfaceCurrent, xhat) -> np.ndarray:
    """H^inf = ik/(4 pi) xhat x int J exp(-ik xhat . y) dS, without projection."""
    system = current.system
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    A = np.einsum("xmd,m->xd", radiation_vectors(system, xhat), current.coefficients)
    return 1j * system.ctx.k / FOUR_PI * np.cross(xhat, A)


def far_field_matrix(system: EfieSystem, xhat, d, N=None) -> np.ndarray:
    """E^inf(xhat, d) as (n_dirs, 3, 3), columns from p = e_x, e_y, e_z."""
    I = solve_many(system, [(d, e) for e in np.eye(3)])
    return far_field_from_coefficients(system, I, xhat, N)


def _adaptive_levels(dist_ratio: np.ndarray) -> np.ndarray:
    return np.select([dist_ratio < 1.5, dist_ratio < 3.0, dist_ratio < 6.0], [3, 2, 1], 0)


def near_field_from_currents(current: SurfaceCurrent, x, order: int = 7):
    """Scattered (E^s, H^s) at points ``x`` (N, 3) away from the surface.

    Source triangles close to a field point are integrated on refined
    sub-triangles; raises :class:`TooCloseError` within one mean edge length.
    """
    system = current.system
    mesh = system.mesh
    k = system.ctx.k
    x = np.atleast_2d(np.asarray(x, dtype=float))
    h = mesh.mean_edge_length()
    dist = np.linalg.norm(x[:, None, :] - mesh.centroids[None], axis=2)
    vdist = np.linalg.norm(x[:, None, :] - mesh.vertices[None], axis=2)
    if np.any(np.minimum(dist.min(axis=1), vdist.min(axis=1)) < h):
        raise TooCloseError("field point within one edge length of the surface")
    coeffs = current.coefficients
    ncol = 1 if coeffs.ndim == 1 else coeffs.shape[1]
    E = np.zeros((len(x), 3, ncol), dtype=complex)
    H = np.zeros_like(E)
    levels = _adaptive_levels(dist / mesh.diameters[None])
    for lev in np.unique(levels):
        pts, wts = _local_current_data(system, order, int(lev))
        J, div = _triangle_currents(system, coeffs, pts)
        for ix in range(len(x)):
            sel = levels[ix] == lev
            if not np.any(sel):
                continue
            diff = x[ix] - pts[sel]  # (f, q, 3)
            R = np.linalg.norm(diff, axis=-1)
            g = np.exp(1j * k * R) / (FOUR_PI * R) * wts[sel]
            dg = g * (1j * k * R - 1) / R**2  # grad G = diff * dg
            E[ix] += 1j * k * np.einsum("fq,fqdn->dn", g, J[sel])
            E[ix] += 1j / k * np.einsum("fq,fqd,fn->dn", dg, diff, div[sel])
            curl = np.cross(diff[..., None, :], np.moveaxis(J[sel], 2, 3))  # (f, q, n, 3)
            H[ix] += np.einsum("fq,fqnd->dn", dg, curl)
    if coeffs.ndim == 1:
        return E[..., 0], H[..., 0]
    return E, H
