"""Triangle surface meshes: loading, validation, queries, perturbation and
feature (Dirichlet set) selection."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

logger = logging.getLogger(__name__)

DEGENERATE_REL_AREA = 1e-12


class MeshError(ValueError):
    """Raised when a mesh file cannot be parsed or fails validation."""


class FeatureWarning(UserWarning):
    """A feature selector matched no vertex."""


class MeshQualityWarning(UserWarning):
    """Perturbation produced degenerate or inverted faces."""


class TriangleMesh:
    """Immutable triangulated 2-manifold (possibly with boundary) in R^3.

    Parameters
    ----------
    vertices : array_like, shape (n, 3)
        Vertex positions. 2D input is padded with z = 0.
    faces : array_like of int, shape (m, 3)
        Counterclockwise vertex-index triples.
    validate : bool, default=True
        Check index range, non-degeneracy, edge-manifoldness and consistent
        orientation. Raises :class:`MeshError` on the first violation.
    """

    def __init__(self, vertices, faces, validate: bool = True):
        v = np.array(vertices, dtype=float)
        f = np.array(faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] not in (2, 3):
            raise MeshError("vertices must have shape (n, 3)")
        if v.shape[1] == 2:
            v = np.column_stack([v, np.zeros(len(v))])
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshError("faces must have shape (m, 3)")
        v.flags.writeable = False
        f.flags.writeable = False
        self.vertices = v
        self.faces = f
        if validate:
            self.validate()

    def __repr__(self):
        return f"TriangleMesh(n_vertices={self.n_vertices}, n_faces={self.n_faces})"

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    # -- derived geometry -------------------------------------------------

    @cached_property
    def _face_cross(self) -> np.ndarray:
        p0, p1, p2 = (self.vertices[self.faces[:, k]] for k in range(3))
        return np.cross(p1 - p0, p2 - p0)

    @cached_property
    def face_areas(self) -> np.ndarray:
        a = 0.5 * np.linalg.norm(self._face_cross, axis=1)
        a.flags.writeable = False
        return a

    @cached_property
    def face_normals(self) -> np.ndarray:
        """Unit normals; zero rows for zero-area faces."""
        c = self._face_cross
        nrm = np.linalg.norm(c, axis=1)
        out = np.zeros_like(c)
        ok = nrm > 0
        out[ok] = c[ok] / nrm[ok, None]
        out.flags.writeable = False
        return out

    @cached_property
    def _half_edges(self) -> np.ndarray:
        f = self.faces
        return np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])

    @cached_property
    def _edge_data(self):
        he = self._half_edges
        key = np.sort(he, axis=1)
        edges, inverse, counts = np.unique(
            key, axis=0, return_inverse=True, return_counts=True
        )
        return edges, inverse.ravel(), counts

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges, shape (n_edges, 2), each row sorted."""
        return self._edge_data[0]

    @cached_property
    def edge_face_counts(self) -> np.ndarray:
        return self._edge_data[2]

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return self.edges[self.edge_face_counts == 1]

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e = self.edges
        return np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    @cached_property
    def n_boundary_loops(self) -> int:
        be = self.boundary_edges
        if len(be) == 0:
            return 0
        verts, local = np.unique(be, return_inverse=True)
        local = local.reshape(be.shape)
        g = sparse.coo_matrix(
            (np.ones(len(be)), (local[:, 0], local[:, 1])), shape=(len(verts),) * 2
        )
        return int(csgraph.connected_components(g, directed=False)[0])

    @cached_property
    def vertex_faces(self) -> sparse.csr_matrix:
        """Incidence matrix, shape (n_vertices, n_faces)."""
        m = self.n_faces
        rows = self.faces.ravel()
        cols = np.repeat(np.arange(m), 3)
        return sparse.csr_matrix(
            (np.ones(3 * m), (rows, cols)), shape=(self.n_vertices, m)
        )

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric vertex adjacency weighted by Euclidean edge length."""
        e = self.edges
        w = self.edge_lengths
        n = self.n_vertices
        a = sparse.coo_matrix((w, (e[:, 0], e[:, 1])), shape=(n, n))
        return (a + a.T).tocsr()

    @cached_property
    def n_components(self) -> int:
        return int(csgraph.connected_components(self.adjacency, directed=False)[0])

    # -- validation --------------------------------------------------------

    def validate(self) -> None:
        """Raise :class:`MeshError` if any structural invariant fails."""
        n = self.n_vertices
        if self.n_faces == 0:
            raise MeshError("mesh has no faces")
        if self.faces.min() < 0 or self.faces.max() >= n:
            raise MeshError("face index out of range")
        f = self.faces
        if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            bad = int(np.flatnonzero((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2])
                                     | (f[:, 0] == f[:, 2]))[0])
            raise MeshError(f"degenerate face {bad}: repeated vertex index")
        h = self.edge_lengths.max()
        small = self.face_areas < DEGENERATE_REL_AREA * h * h
        if small.any():
            bad = int(np.flatnonzero(small)[0])
            raise MeshError(
                f"degenerate face {bad}: area {self.face_areas[bad]:.3e} below "
                f"{DEGENERATE_REL_AREA:g} * h^2"
            )
        counts = self.edge_face_counts
        if np.any(counts > 2):
            bad = self.edges[np.flatnonzero(counts > 2)[0]]
            raise MeshError(f"non-manifold edge ({bad[0]}, {bad[1]})")
        # a consistently oriented manifold never repeats a directed half-edge
        he = self._half_edges
        _, hcounts = np.unique(he, axis=0, return_counts=True)
        if np.any(hcounts > 1):
            dup = np.unique(he, axis=0)[np.flatnonzero(hcounts > 1)[0]]
            raise MeshError(
                f"inconsistent orientation at edge ({dup[0]}, {dup[1]})"
            )

    # -- transforms --------------------------------------------------------

    def with_vertices(self, vertices, validate: bool = True) -> "TriangleMesh":
        """Same connectivity, new positions."""
        return TriangleMesh(vertices, self.faces, validate=validate)

    def scaled(self, factor: float) -> "TriangleMesh":
        return self.with_vertices(self.vertices * factor)


@dataclass(frozen=True)
class MeshStats:
    ell: float
    h: float
    n_vertices: int
    n_faces: int
    n_boundary_loops: int

    def as_dict(self) -> dict:
        return {
            "ell": self.ell,
            "h": self.h,
            "n_vertices": self.n_vertices,
            "n_faces": self.n_faces,
            "n_boundary_loops": self.n_boundary_loops,
        }


def mesh_stats(mesh: TriangleMesh) -> MeshStats:
    """Average (``ell``) and maximum (``h``) edge length plus element counts."""
    lengths = mesh.edge_lengths
    return MeshStats(
        ell=float(lengths.mean()),
        h=float(lengths.max()),
        n_vertices=mesh.n_vertices,
        n_faces=mesh.n_faces,
        n_boundary_loops=mesh.n_boundary_loops,
    )


# -- file formats -------------------------------------------------------------


def _split_polygon(poly, verts):
    if len(poly) == 3:
        return [tuple(poly)]
    if len(poly) == 4:
        a, b, c, d = poly
        if np.linalg.norm(verts[a] - verts[c]) <= np.linalg.norm(verts[b] - verts[d]):
            return [(a, b, c), (a, c, d)]
        return [(a, b, d), (b, c, d)]
    raise MeshError(f"unsupported polygon with {len(poly)} vertices")


def _tokens(path: Path):
    for raw in path.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line.split()


def read_off(path) -> tuple[np.ndarray, list]:
    path = Path(path)
    lines = _tokens(path)
    try:
        head = next(lines)
        if head[0].upper() not in ("OFF", "COFF", "NOFF"):
            raise MeshError(f"{path}: missing OFF header")
        counts = head[1:] if len(head) > 1 else next(lines)
        nv, nf = int(counts[0]), int(counts[1])
        verts = np.array([[float(t) for t in next(lines)[:3]] for _ in range(nv)])
        polys = []
        for _ in range(nf):
            tok = next(lines)
            k = int(tok[0])
            if len(tok) < k + 1:
                raise MeshError(f"{path}: truncated face record")
            polys.append([int(t) for t in tok[1:k + 1]])
    except StopIteration:
        raise MeshError(f"{path}: unexpected end of file") from None
    except (ValueError, IndexError) as exc:
        raise MeshError(f"{path}: parse error: {exc}") from None
    return verts, polys


def read_obj(path) -> tuple[np.ndarray, list]:
    path = Path(path)
    verts, polys = [], []
    try:
        for tok in _tokens(path):
            if tok[0] == "v":
                verts.append([float(t) for t in tok[1:4]])
            elif tok[0] == "f":
                idx = []
                for t in tok[1:]:
                    i = int(t.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                polys.append(idx)
    except (ValueError, IndexError) as exc:
        raise MeshError(f"{path}: parse error: {exc}") from None
    if not verts:
        raise MeshError(f"{path}: no vertices")
    return np.array(verts, dtype=float), polys


def load_mesh(path, format: str | None = None) -> TriangleMesh:
    """Read an ASCII OFF or OBJ file into a validated :class:`TriangleMesh`.

    Quadrilaterals are split along their shorter diagonal.

    Parameters
    ----------
    path : str or Path
    format : {"off", "obj"}, optional
        Inferred from the suffix when omitted.
    """
    path = Path(path)
    if not path.is_file():
        raise MeshError(f"{path}: no such file")
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "off":
        verts, polys = read_off(path)
    elif fmt == "obj":
        verts, polys = read_obj(path)
    else:
        raise MeshError(f"{path}: unknown mesh format {fmt!r}")
    if verts.ndim != 2 or verts.shape[1] != 3:
        raise MeshError(f"{path}: vertices need 3 coordinates")
    tris = []
    for poly in polys:
        if min(poly) < 0 or max(poly) >= len(verts):
            raise MeshError(f"{path}: face index out of range")
        tris.extend(_split_polygon(poly, verts))
    return TriangleMesh(verts, np.array(tris, dtype=np.int64).reshape(-1, 3))


def save_obj(mesh: TriangleMesh, path) -> None:
    with open(path, "w") as fh:
        for x, y, z in mesh.vertices.tolist():
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for a, b, c in mesh.faces + 1:
            fh.write(f"f {a} {b} {c}\n")


def save_off(mesh: TriangleMesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"OFF\n{mesh.n_vertices} {mesh.n_faces} 0\n")
        for x, y, z in mesh.vertices.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")
        for a, b, c in mesh.faces:
            fh.write(f"3 {a} {b} {c}\n")


# -- perturbation ------------------------------------------------------------


def perturb_vertices(mesh: TriangleMesh, sigma: float, seed: int) -> TriangleMesh:
    """Displace every vertex by an isotropic Gaussian with per-component
    standard deviation ``sigma``. Connectivity is kept.

    Degenerate or inverted faces do not raise; they are reported through a
    :class:`MeshQualityWarning` carrying the counts.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return mesh.with_vertices(mesh.vertices.copy(), validate=False)
    rng = np.random.default_rng(seed)
    noisy = mesh.vertices + rng.normal(0.0, sigma, size=mesh.vertices.shape)
    out = TriangleMesh(noisy, mesh.faces, validate=False)
    if out.n_faces == 0:
        return out
    h = out.edge_lengths.max()
    n_degen = int(np.count_nonzero(out.face_areas < DEGENERATE_REL_AREA * h * h))
    n_flip = int(np.count_nonzero(
        np.einsum("ij,ij->i", out.face_normals, mesh.face_normals) < 0
    ))
    if n_degen or n_flip:
        msg = f"perturbation left {n_degen} degenerate and {n_flip} inverted faces"
        logger.warning(msg)
        warnings.warn(msg, MeshQualityWarning, stacklevel=2)
    return out


# -- feature selection --------------------------------------------------------


@dataclass(frozen=True)
class BoundaryPartition:
    """Dirichlet feature vertices ``gamma1`` and free boundary ``gamma2``."""

    gamma1: np.ndarray
    gamma2: np.ndarray

    def __post_init__(self):
        g1 = np.unique(np.asarray(self.gamma1, dtype=np.int64))
        g2 = np.unique(np.asarray(self.gamma2, dtype=np.int64))
        if len(g1) == 0:
            raise ValueError("gamma1 must be nonempty")
        if np.intersect1d(g1, g2).size:
            raise ValueError("gamma1 and gamma2 overlap")
        g1.flags.writeable = False
        g2.flags.writeable = False
        object.__setattr__(self, "gamma1", g1)
        object.__setattr__(self, "gamma2", g2)

    def mask(self, n_vertices: int) -> np.ndarray:
        m = np.zeros(n_vertices, dtype=bool)
        m[self.gamma1] = True
        return m


_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class NearestVertex:
    point: tuple

    def select(self, mesh: TriangleMesh) -> np.ndarray:
        d = np.linalg.norm(mesh.vertices - np.asarray(self.point, float), axis=1)
        # argmin returns the lowest index among ties
        return np.array([int(np.argmin(d))])


@dataclass(frozen=True)
class Band:
    """Vertices with ``|coord[axis] - center| < tol`` plus optional
    half-space bounds ``coord >= ge[axis]`` and ``coord <= le[axis]``.

    ``tol=None`` means a quarter of the mean edge length.
    """

    axis: str
    center: float = 0.0
    tol: float | None = None
    ge: dict = field(default_factory=dict)
    le: dict = field(default_factory=dict)

    def select(self, mesh: TriangleMesh) -> np.ndarray:
        tol = self.tol if self.tol is not None else mesh_stats(mesh).ell / 4
        v = mesh.vertices
        keep = np.abs(v[:, _AXES[self.axis]] - self.center) < tol
        for ax, lo in self.ge.items():
            keep &= v[:, _AXES[ax]] >= lo
        for ax, hi in self.le.items():
            keep &= v[:, _AXES[ax]] <= hi
        return np.flatnonzero(keep)


@dataclass(frozen=True)
class AllBoundary:
    def select(self, mesh: TriangleMesh) -> np.ndarray:
        return mesh.boundary_vertices


@dataclass(frozen=True)
class VertexList:
    indices: tuple

    def select(self, mesh: TriangleMesh) -> np.ndarray:
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= mesh.n_vertices):
            raise ValueError("vertex index out of range")
        return idx


def selector_from_dict(d: dict):
    """Build a selector from its config mapping.

    Recognised forms::

        {"nearest": [x, y, z]}
        {"band": {"axis": "z", "center": 0.0, "tol": 0.01, "ge": {"y": 0.0}}}
        {"boundary": true}
        {"vertices": [0, 5, 7]}
    """
    if "nearest" in d:
        return NearestVertex(tuple(float(c) for c in d["nearest"]))
    if "band" in d:
        b = dict(d["band"])
        return Band(
            axis=b["axis"],
            center=float(b.get("center", 0.0)),
            tol=None if b.get("tol") is None else float(b["tol"]),
            ge={k: float(v) for k, v in (b.get("ge") or {}).items()},
            le={k: float(v) for k, v in (b.get("le") or {}).items()},
        )
    if d.get("boundary"):
        return AllBoundary()
    if "vertices" in d:
        return VertexList(tuple(int(i) for i in d["vertices"]))
    raise ValueError(f"unrecognised feature selector {d!r}")


def select_features(mesh: TriangleMesh, spec) -> BoundaryPartition:
    """Union the vertex sets picked by each selector into ``gamma1``;
    ``gamma2`` is the remaining boundary.

    ``spec`` is a list of selector objects or their dict forms (see
    :func:`selector_from_dict`).
    """
    chosen = []
    for i, sel in enumerate(spec):
        if isinstance(sel, dict):
            sel = selector_from_dict(sel)
        idx = sel.select(mesh)
        if idx.size == 0:
            msg = f"feature selector {i} ({sel!r}) matched no vertex"
            logger.warning(msg)
            warnings.warn(msg, FeatureWarning, stacklevel=2)
        chosen.append(idx)
    gamma1 = np.unique(np.concatenate(chosen)) if chosen else np.array([], int)
    if gamma1.size == 0:
        raise ValueError("feature set gamma1 is empty")
    gamma2 = np.setdiff1d(mesh.boundary_vertices, gamma1)
    return BoundaryPartition(gamma1, gamma2)
