"""Error metrics, convergence rates and distance-property audits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sfem
from .mesh import TriangleMesh

SMAPE_SKIP = 1e-12
AUDIT_TOL = 1e-12


@dataclass(frozen=True)
class ErrorReport:
    smape: float
    l2_relative: float
    linf: float
    n_skipped: int

    def as_dict(self) -> dict:
        return {
            "smape": self.smape,
            "l2_relative": self.l2_relative,
            "linf": self.linf,
            "n_skipped": self.n_skipped,
        }


def _pair(u, dist):
    u = np.asarray(u, dtype=float)
    dist = np.asarray(dist, dtype=float)
    if u.shape != dist.shape:
        raise ValueError("fields have different lengths")
    return u, dist


def smape_with_skips(u, dist) -> tuple[float, int]:
    """SMAPE in percent and the number of vertices skipped because both
    values vanish there (0/0 on the feature set)."""
    u, dist = _pair(u, dist)
    denom = np.abs(dist) + np.abs(u)
    keep = denom >= SMAPE_SKIP
    n = int(keep.sum())
    if n == 0:
        raise ValueError("SMAPE undefined: every vertex was skipped")
    val = 100.0 / n * np.sum(np.abs(dist[keep] - u[keep]) / (denom[keep] / 2))
    return float(val), int(len(u) - n)


def smape(u, dist) -> float:
    """Symmetric mean absolute percentage error, in percent."""
    return smape_with_skips(u, dist)[0]


def l2_relative_error(mesh: TriangleMesh, u, dist) -> float:
    """``||u - dist|| / ||dist||`` in the lumped-mass L2 norm."""
    u, dist = _pair(u, dist)
    m = sfem.assemble_load(mesh)
    e = u - dist
    den = float(dist @ (m * dist))
    if den <= 0:
        raise ValueError("reference field has zero L2 norm")
    return float(np.sqrt(e @ (m * e) / den))


def error_report(mesh: TriangleMesh, u, dist) -> ErrorReport:
    s, skipped = smape_with_skips(u, dist)
    return ErrorReport(
        smape=s,
        l2_relative=l2_relative_error(mesh, u, dist),
        linf=float(np.max(np.abs(np.asarray(u) - np.asarray(dist)))),
        n_skipped=skipped,
    )


def convergence_rates(errors) -> list[float]:
    """``log2(e[k-1] / e[k])`` for errors measured at doubling p."""
    e = np.asarray(errors, dtype=float)
    if e.size < 2:
        raise ValueError("need at least two error values")
    if np.any(e <= 0):
        raise ValueError("errors must be positive")
    return list(np.log2(e[:-1] / e[1:]))


def grad_deviation(mesh: TriangleMesh, u) -> float:
    """Area-normalised L1 norm of ``1 - |grad u|``."""
    gn = np.linalg.norm(sfem.face_gradient(mesh, u), axis=1)
    a = mesh.face_areas
    return float(np.sum(a * np.abs(1.0 - gn)) / a.sum())


@dataclass(frozen=True)
class TriangleAudit:
    """Per-vertex check of ``d(q1, x) + d(q2, x) >= max(d(q1, q2), d(q2, q1))``."""

    satisfied: np.ndarray
    violations: int
    d12: float
    d21: float
    threshold: float
    q1: int
    q2: int

    @property
    def violating_vertices(self) -> np.ndarray:
        return np.flatnonzero(~self.satisfied)

    def as_dict(self) -> dict:
        return {
            "q1": self.q1,
            "q2": self.q2,
            "d12": self.d12,
            "d21": self.d21,
            "threshold": self.threshold,
            "violations": self.violations,
            "n_vertices": int(self.satisfied.size),
        }


def triangle_audit(mesh: TriangleMesh, u1, u2, q1: int, q2: int,
                   tol: float = AUDIT_TOL) -> TriangleAudit:
    """Audit the triangle inequality for distance fields ``u1`` (source
    ``q1``) and ``u2`` (source ``q2``).

    Because the two approximate distances between the sources differ
    slightly, the larger one is used as the right-hand side.
    """
    u1, u2 = _pair(u1, u2)
    if u1.shape != (mesh.n_vertices,):
        raise ValueError("fields do not match the mesh")
    d12 = float(u1[q2])
    d21 = float(u2[q1])
    thr = max(d12, d21)
    ok = u1 + u2 >= thr - tol
    return TriangleAudit(ok, int((~ok).sum()), d12, d21, thr, int(q1), int(q2))
