"""Closed triangle meshes, RWG edge bases and triangle quadrature.

Mesh text format (OFF style, whitespace separated, one record per line)::

    OFF
    <n_vertices> <n_faces> 0
    x y z                      # n_vertices lines
    3 i j k [body]             # n_faces lines, optional body id (default 0)

Faces are listed counter-clockwise when seen from outside the body.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import OverlapError


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    body_id: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.ascontiguousarray(self.vertices, dtype=float))
        object.__setattr__(self, "triangles", np.ascontiguousarray(self.triangles, dtype=np.int64))
        object.__setattr__(self, "body_id", np.ascontiguousarray(self.body_id, dtype=np.int64))

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def corners(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape (F, 3, 3)."""
        return self.vertices[self.triangles]

    @cached_property
    def _cross(self) -> np.ndarray:
        c = self.corners
        return np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._cross, axis=1)

    @cached_property
    def normals(self) -> np.ndarray:
        return self._cross / (2 * self.areas[:, None])

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @cached_property
    def diameters(self) -> np.ndarray:
        c = self.corners
        e = np.linalg.norm(c[:, [1, 2, 0]] - c, axis=2)
        return e.max(axis=1)

    @property
    def bodies(self) -> np.ndarray:
        return np.unique(self.body_id)

    @property
    def scale(self) -> float:
        return float(np.ptp(self.vertices, axis=0).max())

    def total_area(self) -> float:
        return float(self.areas.sum())

    def signed_volume(self, body: int | None = None) -> float:
        c = self.corners if body is None else self.corners[self.body_id == body]
        return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6)

    def body(self, body: int) -> "TriMesh":
        sel = self.body_id == body
        used = np.unique(self.triangles[sel])
        remap = np.full(len(self.vertices), -1)
        remap[used] = np.arange(len(used))
        return TriMesh(self.vertices[used], remap[self.triangles[sel]], np.zeros(sel.sum(), int))

    def bounding_sphere(self) -> tuple[np.ndarray, float]:
        c = self.vertices.mean(axis=0)
        return c, float(np.linalg.norm(self.vertices - c, axis=1).max())

    def mean_edge_length(self) -> float:
        c = self.corners
        return float(np.linalg.norm(c[:, [1, 2, 0]] - c, axis=2).mean())

    def validate(self) -> None:
        """Check closedness, outward orientation and non-degeneracy per body."""
        if np.any(self.areas <= 1e-12 * self.scale**2):
            raise ValueError("degenerate triangle")
        for b in self.bodies:
            tri = self.triangles[self.body_id == b]
            directed = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
            und = np.sort(directed, axis=1)
            _, counts = np.unique(und, axis=0, return_counts=True)
            if np.any(counts != 2):
                raise ValueError(f"body {b} is not a closed 2-manifold")
            _, dcounts = np.unique(directed, axis=0, return_counts=True)
            if np.any(dcounts != 1):
                raise ValueError(f"body {b} is not consistently oriented")
            if self.signed_volume(b) <= 0:
                raise ValueError(f"body {b} is oriented inward")

    def translated(self, shift) -> "TriMesh":
        return TriMesh(self.vertices + np.asarray(shift, float), self.triangles, self.body_id)


def icosphere(
    center=(0.0, 0.0, 0.0), radius: float = 1.0, subdivisions: int = 2, volume_match: bool = False
) -> TriMesh:
    """Subdivided icosahedron with vertices projected onto the sphere (20 * 4^s faces).

    With ``volume_match`` the vertices are pushed radially outward by the common
    factor that makes the enclosed volume equal to that of the ball.  This
    removes the leading O(h^2) shrinkage of the inscribed polyhedron.
    """
    if not 0 <= subdivisions <= 6:
        raise ValueError("subdivisions must be in 0..6")
    t = (1 + 5**0.5) / 2
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    V = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    F = faces
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                m = V[i] + V[j]
                V.append(m / np.linalg.norm(m))
                cache[key] = len(V) - 1
            return cache[key]

        new = []
        for a, b, c in F:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        F = new
    V = np.array(V)
    if volume_match:
        c = V[np.array(F)]
        vol = np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6
        V *= (4 * np.pi / 3 / vol) ** (1 / 3)
    verts = np.asarray(center, float) + radius * V
    return TriMesh(verts, np.array(F), np.zeros(len(F), int))


def merge_scene(meshes: list[TriMesh], gap: float = 1e-6) -> TriMesh:
    """Disjoint union of single-body meshes; each input becomes its own body."""
    if not meshes:
        raise ValueError("empty scene")
    if len(meshes) == 1:
        return meshes[0]
    scale = max(m.scale for m in meshes)
    spheres = [m.bounding_sphere() for m in meshes]
    for i in range(len(meshes)):
        for j in range(i + 1, len(meshes)):
            (ci, ri), (cj, rj) = spheres[i], spheres[j]
            if np.linalg.norm(ci - cj) <= ri + rj + gap * scale:
                raise OverlapError(f"bodies {i} and {j} intersect or touch")
    verts, tris, ids = [], [], []
    offset = 0
    for b, m in enumerate(meshes):
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        ids.append(np.full(m.n_triangles, b))
        offset += len(m.vertices)
    return TriMesh(np.concatenate(verts), np.concatenate(tris), np.concatenate(ids))


@dataclass(frozen=True, eq=False)
class RwgBasis:
    """RWG functions, one per interior edge.

    ``tri_edge[f, i]`` and ``tri_sign[f, i]`` give the edge carrying the local
    function of triangle ``f`` whose free vertex is corner ``i`` (the edge
    opposite that corner), and its sign (+1 on T+, -1 on T-).
    """

    edges: np.ndarray  # (E, 2) vertex indices
    triangles: np.ndarray  # (E, 2) [T+, T-]
    free_vertices: np.ndarray  # (E, 2) vertex indices
    lengths: np.ndarray  # (E,)
    tri_edge: np.ndarray  # (F, 3)
    tri_sign: np.ndarray  # (F, 3)

    @property
    def size(self) -> int:
        return len(self.edges)

    def local_coefficients(self) -> np.ndarray:
        """Signed edge length for each local function, shape (F, 3)."""
        return self.tri_sign * self.lengths[self.tri_edge]


def rwg_basis(mesh: TriMesh) -> RwgBasis:
    tri = mesh.triangles
    F = len(tri)
    # local function i lives on the edge opposite corner i
    opp = np.stack([tri[:, [1, 2]], tri[:, [2, 0]], tri[:, [0, 1]]], axis=1)  # (F, 3, 2)
    keys = np.sort(opp.reshape(-1, 2), axis=1)
    uniq, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if np.any(counts != 2):
        raise ValueError("mesh has boundary or non-manifold edges")
    order = np.argsort(inverse, kind="stable")
    first, second = order[0::2], order[1::2]
    tri_edge = inverse.reshape(F, 3)
    sign = np.empty(3 * F, dtype=np.int64)
    sign[first] = 1
    sign[second] = -1
    t_plus, t_minus = first // 3, second // 3
    if np.any(mesh.body_id[t_plus] != mesh.body_id[t_minus]):
        raise ValueError("edge shared by two bodies")
    free = np.stack([tri[t_plus, first % 3], tri[t_minus, second % 3]], axis=1)
    lengths = np.linalg.norm(mesh.vertices[uniq[:, 0]] - mesh.vertices[uniq[:, 1]], axis=1)
    return RwgBasis(
        uniq, np.stack([t_plus, t_minus], axis=1), free, lengths, tri_edge, sign.reshape(F, 3)
    )


# Symmetric triangle rules in barycentric coordinates, weights summing to one.
_S15 = 15**0.5
_RULES = {
    1: (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])),
    3: (
        np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.full(3, 1 / 3),
    ),
    4: (
        np.array([[1 / 3, 1 / 3, 1 / 3], [0.6, 0.2, 0.2], [0.2, 0.6, 0.2], [0.2, 0.2, 0.6]]),
        np.array([-27 / 48, 25 / 48, 25 / 48, 25 / 48]),
    ),
}
_b1, _b2 = (6 - _S15) / 21, (6 + _S15) / 21
_w1, _w2 = (155 - _S15) / 1200, (155 + _S15) / 1200
_RULES[7] = (
    np.array(
        [
            [1 / 3, 1 / 3, 1 / 3],
            [1 - 2 * _b1, _b1, _b1], [_b1, 1 - 2 * _b1, _b1], [_b1, _b1, 1 - 2 * _b1],
            [1 - 2 * _b2, _b2, _b2], [_b2, 1 - 2 * _b2, _b2], [_b2, _b2, 1 - 2 * _b2],
        ]
    ),
    np.array([9 / 40, _w1, _w1, _w1, _w2, _w2, _w2]),
)


def triangle_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric points (n, 3) and weights (n,) of the ``order``-point rule."""
    try:
        return _RULES[order]
    except KeyError:
        raise ValueError(f"no {order}-point triangle rule; choose from {sorted(_RULES)}") from None


def subdivided_rule(order: int, levels: int) -> tuple[np.ndarray, np.ndarray]:
    """The rule applied on the 4^levels midpoint-subdivision children."""
    bary, w = triangle_rule(order)
    tris = [np.eye(3)]
    for _ in range(levels):
        new = []
        for t in tris:
            m01, m12, m20 = (t[0] + t[1]) / 2, (t[1] + t[2]) / 2, (t[2] + t[0]) / 2
            new += [
                np.array([t[0], m01, m20]),
                np.array([m01, t[1], m12]),
                np.array([m20, m12, t[2]]),
                np.array([m01, m12, m20]),
            ]
        tris = new
    pts = np.concatenate([bary @ t for t in tris])
    return pts, np.tile(w, len(tris)) / len(tris)


def gauss_points(corners, order: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Physical points (..., n, 3) and weights (..., n) summing to the triangle area."""
    corners = np.asarray(corners, dtype=float)
    bary, w = triangle_rule(order)
    pts = np.einsum("qi,...id->...qd", bary, corners)
    cr = np.cross(corners[..., 1, :] - corners[..., 0, :], corners[..., 2, :] - corners[..., 0, :])
    area = 0.5 * np.linalg.norm(cr, axis=-1)
    return pts, area[..., None] * w


def write_mesh(mesh: TriMesh, path) -> None:
    lines = ["OFF", f"{len(mesh.vertices)} {mesh.n_triangles} 0"]
    lines += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    lines += [f"3 {a} {b} {c} {bid}" for (a, b, c), bid in zip(mesh.triangles, mesh.body_id)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> TriMesh:
    rows = [ln.split() for ln in Path(path).read_text().splitlines()]
    rows = [r for r in rows if r and not r[0].startswith("#")]
    if rows[0] != ["OFF"]:
        raise ValueError("missing OFF header")
    nv, nf = int(rows[1][0]), int(rows[1][1])
    V = np.array([[float(c) for c in r[:3]] for r in rows[2 : 2 + nv]])
    faces, ids = [], []
    for r in rows[2 + nv : 2 + nv + nf]:
        if int(r[0]) != 3:
            raise ValueError("only triangular faces are supported")
        faces.append([int(c) for c in r[1:4]])
        ids.append(int(r[4]) if len(r) > 4 else 0)
    return TriMesh(V, np.array(faces), np.array(ids))
