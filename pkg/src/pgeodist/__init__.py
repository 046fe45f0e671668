"""Geodesic distance on triangle meshes via the surface p-Poisson problem."""

from .fixtures import generate_fixture
from .mesh import (BoundaryPartition, MeshError, MeshStats, TriangleMesh, load_mesh, mesh_stats,
                   perturb_vertices, select_features)
from .metrics import error_report, l2_relative_error, smape, triangle_audit
from .ppoisson import SolverConfig, admm_solve, continuation_solve

__version__ = "0.1.0"

__all__ = [
    "BoundaryPartition", "MeshError", "MeshStats", "SolverConfig", "TriangleMesh",
    "admm_solve", "continuation_solve", "error_report", "generate_fixture",
    "l2_relative_error", "load_mesh", "mesh_stats", "perturb_vertices",
    "select_features", "smape", "triangle_audit",
]
