"""Built-in fixture surfaces. Every refinement level quadruples the face count."""

from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh


def _subdivide_fast(vertices, faces):
    """Vectorised 1-to-4 split. Returns (vertices, faces, split_edges); the
    midpoint of ``split_edges[k]`` is vertex ``len(vertices) + k``."""
    n = len(vertices)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    key = np.sort(e, axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    mids = 0.5 * (vertices[uniq[:, 0]] + vertices[uniq[:, 1]])
    m = len(faces)
    ab, bc, ca = (n + inv[k * m:(k + 1) * m] for k in range(3))
    a, b, c = faces.T
    new_faces = np.concatenate([
        np.stack([a, ab, ca], 1),
        np.stack([ab, b, bc], 1),
        np.stack([ca, bc, c], 1),
        np.stack([ab, bc, ca], 1),
    ])
    return np.vstack([vertices, mids]), new_faces, uniq


def hemisphere(level: int, anchors=()) -> TriangleMesh:
    """Unit hemisphere ``x >= 0`` from a subdivided octahedron.

    The boundary circle ``x = 0`` and the half circle ``z = 0`` are unions of
    mesh edges, so both carry vertices exactly. ``4 * 4**level`` faces.
    Each point in ``anchors`` (on the unit sphere) replaces its nearest
    vertex, so point features can sit exactly on a vertex.
    """
    v = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1], [0, -1, 0], [0, 0, -1]], float)
    f = np.array([[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1]], dtype=np.int64)
    for _ in range(level):
        v, f, _ = _subdivide_fast(v, f)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
    v[np.abs(v[:, 0]) < 1e-15, 0] = 0.0
    for a in anchors:
        a = np.asarray(a, dtype=float)
        v[np.argmin(np.linalg.norm(v - a, axis=1))] = a / np.linalg.norm(a)
    return TriangleMesh(v, f)


def icosahedron(edge: float = 1.0) -> TriangleMesh:
    """Regular icosahedron with the given edge length."""
    t = (1 + 5 ** 0.5) / 2
    v = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], float)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    return TriangleMesh(v * (edge / 2.0), f)


def _grid_faces(nu, nv, wrap_u, wrap_v):
    """Two triangles per grid cell; vertex (i, j) has index i * nv' + j."""
    nv_pts = nv if wrap_v else nv + 1
    i, j = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    i, j = i.ravel(), j.ravel()
    i1 = (i + 1) % nu if wrap_u else i + 1
    j1 = (j + 1) % nv if wrap_v else j + 1
    a = i * nv_pts + j
    b = i1 * nv_pts + j
    c = i1 * nv_pts + j1
    d = i * nv_pts + j1
    return np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])


def _orient_outward(vertices, faces, outward):
    p0, p1, p2 = (vertices[faces[:, k]] for k in range(3))
    n = np.cross(p1 - p0, p2 - p0)
    centroid = (p0 + p1 + p2) / 3
    if np.einsum("ij,ij->i", n, outward(centroid)).sum() < 0:
        faces = faces[:, [0, 2, 1]]
    return faces


def torus(R: float = 2.0, r: float = 1.0, n_major: int = 48, n_minor: int = 32) -> TriangleMesh:
    """Torus of revolution about the y axis,
    ``(R - sqrt(x^2 + z^2))^2 + y^2 = r^2``.

    The minor angle grid contains 0 and pi whenever ``n_minor`` is even, so
    both circles in the plane ``y = 0`` are mesh edge loops.
    """
    if not R > r > 0:
        raise ValueError("torus needs R > r > 0")
    th = 2 * np.pi * np.arange(n_major) / n_major
    ph = 2 * np.pi * np.arange(n_minor) / n_minor
    T, P = np.meshgrid(th, ph, indexing="ij")
    rho = R + r * np.cos(P)
    y = r * np.sin(P)
    y[np.abs(y) < 1e-14] = 0.0
    v = np.stack([rho * np.cos(T), y, rho * np.sin(T)], -1).reshape(-1, 3)
    f = _grid_faces(n_major, n_minor, True, True)

    def outward(x):
        s = np.hypot(x[:, 0], x[:, 2])
        c = np.stack([x[:, 0] * R / s, np.zeros(len(x)), x[:, 2] * R / s], 1)
        return x - c

    return TriangleMesh(v, _orient_outward(v, f, outward))


def strip(half_length: float = 1.0, width: float = 0.1, nx: int = 40, ny: int = 4) -> TriangleMesh:
    """Planar rectangle ``[-L, L] x [0, w]`` in the plane ``z = 0``."""
    x = np.linspace(-half_length, half_length, nx + 1)
    y = np.linspace(0.0, width, ny + 1)
    X, Y = np.meshgrid(x, y, indexing="ij")
    v = np.stack([X.ravel(), Y.ravel(), np.zeros(X.size)], 1)
    f = _grid_faces(nx, ny, False, False)
    return TriangleMesh(v, _orient_outward(v, f, lambda c: np.tile([0, 0, 1.0], (len(c), 1))))


def disc(level: int, radius: float = 1.0) -> TriangleMesh:
    """Planar disc from a refined hexagon; new boundary vertices are pushed
    radially onto the circle after every split. ``6 * 4**level`` faces."""
    ang = np.arange(6) * np.pi / 3
    v = np.vstack([[0, 0, 0], np.stack([np.cos(ang), np.sin(ang), np.zeros(6)], 1)])
    f = np.array([[0, 1 + k, 1 + (k + 1) % 6] for k in range(6)], dtype=np.int64)
    for _ in range(level):
        n_old = len(v)
        old_boundary = np.zeros(n_old, bool)
        old_boundary[TriangleMesh(v, f, validate=False).boundary_vertices] = True
        v, f, edges = _subdivide_fast(v, f)
        on_bnd = old_boundary[edges[:, 0]] & old_boundary[edges[:, 1]]
        # midpoints of boundary edges only: check the new mesh boundary
        mesh = TriangleMesh(v, f, validate=False)
        bnd = np.zeros(len(v), bool)
        bnd[mesh.boundary_vertices] = True
        new_bnd = np.flatnonzero(bnd[n_old:] & on_bnd) + n_old
        v[new_bnd, :2] /= np.linalg.norm(v[new_bnd, :2], axis=1, keepdims=True)
    v[:, :2] *= radius
    return TriangleMesh(v, f)


FIXTURES = ("hemisphere", "torus", "strip", "disc")


def generate_fixture(kind: str, resolution: int, **params) -> TriangleMesh:
    """Build a named fixture at a refinement level.

    ``resolution`` is a refinement level >= 1 (level 0 also accepted for
    hemisphere and disc). Face counts:

    * hemisphere: ``4 * 4**level``
    * torus: ``48 * 4**level`` (``n_major = 6 * 2**level``,
      ``n_minor = 4 * 2**level``); level 6 gives 196608 faces
    * strip: ``40 * 4**level`` (``nx = 20 * 2**level``, ``ny = 2**level``)
    * disc: ``6 * 4**level``
    """
    if int(resolution) != resolution or resolution < 0:
        raise ValueError("resolution must be a nonnegative integer")
    k = int(resolution)
    if kind == "hemisphere":
        return hemisphere(k, params.get("anchors", ()))
    if kind == "torus":
        R = float(params.get("R", 2.0))
        r = float(params.get("r", 1.0))
        return torus(R, r, 6 * 2 ** k, 4 * 2 ** k)
    if kind == "strip":
        L = float(params.get("half_length", 1.0))
        w = float(params.get("width", 0.1))
        return strip(L, w, 20 * 2 ** k, 2 ** k)
    if kind == "disc":
        return disc(k, float(params.get("radius", 1.0)))
    raise ValueError(f"unknown fixture kind {kind!r}")
