"""Piecewise-linear surface finite elements on triangle meshes.

All operators derive from one sparse matrix ``D`` of shape ``(3 m, n)``
that maps nodal values to stacked per-face gradients. Stiffness and the weak
divergence are then ``D^T A D`` and ``D^T A`` with ``A`` the face areas, so
``assemble_div_rhs(face_gradient(u)) == K @ u`` holds algebraically.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .mesh import TriangleMesh

logger = logging.getLogger(__name__)

SOLVE_RTOL = 1e-10
MAX_REFINEMENT_STEPS = 5
_DEGENERATE = 1e-12


class SfemError(RuntimeError):
    """Assembly or linear-solve failure."""


def basis_gradients(mesh: TriangleMesh) -> np.ndarray:
    """Gradients of the three hat functions on every face.

    Returns
    -------
    np.ndarray, shape (n_faces, 3, 3)
        ``G[t, i]`` is the (tangent) gradient of the hat function of local
        vertex ``i`` on face ``t``.
    """
    cache = mesh.__dict__.get("_sfem_basis")
    if cache is not None:
        return cache
    v = mesh.vertices
    p = [v[mesh.faces[:, k]] for k in range(3)]
    opp = np.stack([p[2] - p[1], p[0] - p[2], p[1] - p[0]], axis=1)
    area = mesh.face_areas
    longest = np.max(np.linalg.norm(opp, axis=2), axis=1)
    bad = area < _DEGENERATE * longest ** 2
    if bad.any():
        t = int(np.flatnonzero(bad)[0])
        raise SfemError(f"near-degenerate face {t} (area {area[t]:.3e})")
    n = mesh.face_normals
    G = np.cross(n[:, None, :], opp) / (2.0 * area)[:, None, None]
    G.flags.writeable = False
    mesh.__dict__["_sfem_basis"] = G
    return G


def gradient_operator(mesh: TriangleMesh) -> sparse.csr_matrix:
    """Sparse ``D`` with ``(D @ u).reshape(-1, 3)`` the per-face gradients."""
    cache = mesh.__dict__.get("_sfem_D")
    if cache is not None:
        return cache
    G = basis_gradients(mesh)
    m = mesh.n_faces
    rows = (3 * np.arange(m)[:, None, None] + np.arange(3)[None, None, :])
    rows = np.broadcast_to(rows, (m, 3, 3))
    cols = np.broadcast_to(mesh.faces[:, :, None], (m, 3, 3))
    D = sparse.csr_matrix(
        (G.ravel(), (rows.ravel(), cols.ravel())), shape=(3 * m, mesh.n_vertices)
    )
    mesh.__dict__["_sfem_D"] = D
    return D


def face_gradient(mesh: TriangleMesh, u) -> np.ndarray:
    """Exact gradient of the linear interpolant of ``u`` on each face."""
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.n_vertices,):
        raise ValueError("nodal field length does not match the mesh")
    return (gradient_operator(mesh) @ u).reshape(-1, 3)


def assemble_div_rhs(mesh: TriangleMesh, w) -> np.ndarray:
    """Weak divergence ``r_i = sum_T area_T w_T . grad(phi_i)``.

    No boundary term is added, which imposes the natural (homogeneous
    Neumann) condition on the free boundary.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (mesh.n_faces, 3):
        raise ValueError("face field must have shape (n_faces, 3)")
    return gradient_operator(mesh).T @ (mesh.face_areas[:, None] * w).ravel()


def assemble_load(mesh: TriangleMesh) -> np.ndarray:
    """``b_i = integral of phi_i`` (one third of the adjacent face areas).

    This is also the diagonal of the lumped mass matrix.
    """
    return mesh.vertex_faces @ mesh.face_areas / 3.0


class SpdSystem:
    """Sparse symmetric system with optional Dirichlet rows and a cached
    factorization.

    Attributes
    ----------
    matrix : scipy.sparse.csc_matrix
    constrained : np.ndarray of int
        Indices whose rows and columns were replaced by the identity.
    """

    def __init__(self, matrix, constrained=None):
        self.matrix = sparse.csc_matrix(matrix)
        self.constrained = (
            np.array([], dtype=np.int64) if constrained is None
            else np.asarray(constrained, dtype=np.int64)
        )
        self._lu = None

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def factorized(self) -> bool:
        return self._lu is not None

    def factor(self):
        if self._lu is None:
            try:
                lu = spla.splu(
                    self.matrix,
                    permc_spec="MMD_AT_PLUS_A",
                    diag_pivot_thresh=0.0,
                    options={"SymmetricMode": True},
                )
            except RuntimeError as exc:
                raise SfemError(f"factorization breakdown: {exc}") from None
            # with diagonal pivoting the U diagonal holds the LDL^T pivots
            piv = lu.U.diagonal()
            if not np.all(piv > 0):
                raise SfemError(
                    f"matrix is not positive definite ({np.count_nonzero(piv <= 0)}"
                    " nonpositive pivots); check assembly and Dirichlet set"
                )
            self._lu = lu
        return self._lu


def assemble_stiffness(mesh: TriangleMesh) -> SpdSystem:
    """P1 stiffness ``K_ij = sum_T area_T grad(phi_i) . grad(phi_j)``
    (the cotangent Laplacian); unconstrained, hence only semidefinite."""
    D = gradient_operator(mesh)
    A = sparse.diags(np.repeat(mesh.face_areas, 3))
    K = (D.T @ A @ D).tocsc()
    K.sum_duplicates()
    return SpdSystem(K)


def constrain_dirichlet(system: SpdSystem, rhs, gamma1, values=None):
    """Impose ``u[gamma1] = values`` (default 0) by symmetric elimination.

    Returns a new :class:`SpdSystem` whose gamma1 rows and columns are the
    identity, and the matching right-hand side.
    """
    gamma1 = np.unique(np.asarray(gamma1, dtype=np.int64))
    if gamma1.size == 0:
        raise ValueError("Dirichlet set gamma1 is empty")
    K = system.matrix
    n = K.shape[0]
    rhs = np.array(rhs, dtype=float)
    g = np.zeros(n)
    if values is not None:
        g[gamma1] = values
    rhs -= K @ g
    free = np.ones(n)
    free[gamma1] = 0.0
    P = sparse.diags(free)
    Kc = P @ K @ P + sparse.diags(1.0 - free)
    rhs[gamma1] = g[gamma1]
    return SpdSystem(Kc.tocsc(), gamma1), rhs


def solve_spd(system: SpdSystem, rhs, rtol: float = SOLVE_RTOL) -> np.ndarray:
    """Solve with the cached sparse factorization of ``system``.

    The factorization is computed on first use and reused afterwards. The
    residual is checked against ``rtol * ||rhs||`` and polished by iterative
    refinement when needed.
    """
    rhs = np.asarray(rhs, dtype=float)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros_like(rhs)
    lu = system.factor()
    x = lu.solve(rhs)
    for step in range(MAX_REFINEMENT_STEPS + 1):
        res = rhs - system.matrix @ x
        rnorm = np.linalg.norm(res)
        if not np.isfinite(rnorm):
            raise SfemError("non-finite residual in linear solve")
        if rnorm <= rtol * bnorm:
            return x
        if step < MAX_REFINEMENT_STEPS:
            x = x + lu.solve(res)
    raise SfemError(
        f"linear solve residual {rnorm / bnorm:.2e} above rtol {rtol:g} after "
        f"{MAX_REFINEMENT_STEPS} refinement steps"
    )
