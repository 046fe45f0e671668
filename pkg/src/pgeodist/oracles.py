"""Reference distances: closed forms on the analytic fixtures and an
edge-graph Dijkstra bound for arbitrary meshes."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csgraph

from .mesh import TriangleMesh

ON_SURFACE_TOL = 1e-9

#: point feature of the hemisphere studies
HEMISPHERE_POINT = np.array([np.sqrt(2) / 2, 0.5, 0.5])


class OracleError(ValueError):
    """Input point is not on the oracle's surface."""


@dataclass(frozen=True)
class AnalyticSurface:
    """Parameters of an analytic fixture: ``kind`` is one of
    ``"hemisphere"``, ``"torus"``, ``"strip"``."""

    kind: str
    radius: float = 1.0
    R: float = 2.0
    r: float = 1.0
    half_length: float = 1.0
    width: float = 0.1

    def __post_init__(self):
        if self.kind == "hemisphere" and not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.kind == "torus" and not self.R > self.r > 0:
            raise ValueError("torus needs R > r > 0")
        if self.kind == "strip" and not (self.half_length > 0 and self.width > 0):
            raise ValueError("strip dimensions must be positive")
        if self.kind not in ("hemisphere", "torus", "strip"):
            raise ValueError(f"unknown analytic surface {self.kind!r}")


def _as_points(x):
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, 3), x.ndim == 1


def _check_unit(x, what):
    dev = np.abs(np.linalg.norm(x, axis=1) - 1.0)
    if np.any(dev > ON_SURFACE_TOL):
        raise OracleError(f"{what} is off the unit sphere by {dev.max():.2e}")


def sphere_point_distance(x, q):
    """Great-circle distance on the unit sphere, ``arccos(x . q)``.

    ``x`` and ``q`` may be single points or broadcastable ``(n, 3)`` arrays.
    """
    xs, sx = _as_points(x)
    qs, sq = _as_points(q)
    _check_unit(xs, "x")
    _check_unit(qs, "q")
    d = np.arccos(np.clip(np.einsum("ij,ij->i", *np.broadcast_arrays(xs, qs)), -1.0, 1.0))
    return float(d[0]) if (sx and sq) else d


def hemisphere_arc_distance(x):
    """Distance on the unit sphere to the quarter circle ``z = 0, x >= 0,
    y >= 0`` (from (1, 0, 0) to (0, 1, 0))."""
    xs, single = _as_points(x)
    rho = np.hypot(xs[:, 0], xs[:, 1])
    # the closest great-circle point (x, y, 0)/rho lies on the arc when its
    # angle is within [0, pi/2]; otherwise the nearer endpoint wins
    on_arc = (xs[:, 0] >= 0) & (xs[:, 1] >= 0)
    d_foot = np.arcsin(np.clip(np.abs(xs[:, 2]), 0.0, 1.0))
    d_e0 = np.arccos(np.clip(xs[:, 0], -1.0, 1.0))
    d_e1 = np.arccos(np.clip(xs[:, 1], -1.0, 1.0))
    d = np.where(on_arc & (rho > 0), d_foot, np.minimum(d_e0, d_e1))
    return float(d[0]) if single else d


def hemisphere_curve_point_distance(x):
    """Geodesic distance on the unit hemisphere ``x > 0`` to the union of the
    point (sqrt(2)/2, 1/2, 1/2) and the arc ``z = 0, y >= 0``.

    The hemisphere is geodesically convex, so great-circle distances apply.
    """
    xs, single = _as_points(x)
    _check_unit(xs, "x")
    if np.any(xs[:, 0] < -ON_SURFACE_TOL):
        raise OracleError("point is outside the hemisphere x >= 0")
    d = np.minimum(
        sphere_point_distance(xs, HEMISPHERE_POINT[None, :]),
        hemisphere_arc_distance(xs),
    )
    return float(d[0]) if single else d


def hemisphere_point_distance(x):
    """Geodesic distance on the unit hemisphere to (sqrt(2)/2, 1/2, 1/2)."""
    xs, single = _as_points(x)
    d = sphere_point_distance(xs, HEMISPHERE_POINT[None, :])
    return float(d[0]) if single else d


def torus_minor_angle(x, R: float = 2.0):
    xs, _ = _as_points(x)
    return np.arctan2(xs[:, 1], np.hypot(xs[:, 0], xs[:, 2]) - R)


def torus_meridian_distance(x, R: float = 2.0, r: float = 1.0):
    """Distance on the torus ``(R - sqrt(x^2 + z^2))^2 + y^2 = r^2`` to its two
    circles in the plane ``y = 0``.

    Meridians are geodesics crossing both circles at right angles, so the
    distance is ``r * min(|phi|, pi - |phi|)`` with ``phi`` the minor angle.
    """
    xs, single = _as_points(x)
    s = np.hypot(xs[:, 0], xs[:, 2])
    dev = np.abs((R - s) ** 2 + xs[:, 1] ** 2 - r * r)
    if np.any(dev > ON_SURFACE_TOL * max(1.0, r * r)):
        raise OracleError(f"point is off the torus by {dev.max():.2e}")
    phi = np.abs(torus_minor_angle(xs, R))
    d = r * np.minimum(phi, np.pi - phi)
    return float(d[0]) if single else d


def exact_1d_p_solution(x, p: float):
    """Solution of ``-(|u'|^(p-2) u')' = 1`` on (-1, 1) with ``u(0) = 0`` and
    ``u'(+-1) = 0``:
    ``u_p(x) = (p-1)/p * (1 - (1 - |x|)^(p/(p-1)))``.
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1 + 1e-12):
        raise ValueError("|x| must be <= 1")
    a = np.clip(1.0 - np.abs(x), 0.0, 1.0)
    k = (p - 1.0) / p
    out = k - k * a ** (p / (p - 1.0))
    return float(out) if out.ndim == 0 else out


def graph_distance(mesh: TriangleMesh, gamma1) -> np.ndarray:
    """Multi-source Dijkstra over mesh edges with Euclidean weights.

    Unreachable vertices come back as ``inf`` and trigger a ``RuntimeWarning``.
    """
    src = np.unique(np.asarray(gamma1, dtype=np.int64))
    if src.size == 0:
        raise ValueError("gamma1 must be nonempty")
    d = csgraph.dijkstra(mesh.adjacency, directed=False, indices=src, min_only=True)
    if np.isinf(d).any():
        warnings.warn(
            f"{int(np.isinf(d).sum())} vertices unreachable from the feature set",
            RuntimeWarning,
            stacklevel=2,
        )
    return d


def strip_1d_solution(x, p: float):
    """The 1D solution evaluated at the first coordinate of strip vertices."""
    xs, _ = _as_points(x)
    return exact_1d_p_solution(xs[:, 0], p)


#: oracles that take the exponent as a second argument
P_DEPENDENT = frozenset({"strip_1d"})


def oracle_for(name: str):
    """Vertex-position oracle by name: ``hemisphere_point``,
    ``hemisphere_curve_point``, ``torus_circles``, ``strip_distance``
    (``|x|``, the distance to the line ``x = 0``) or ``strip_1d``
    (the finite-p solution, called as ``f(x, p)``)."""
    table = {
        "strip_1d": strip_1d_solution,
        "hemisphere_point": hemisphere_point_distance,
        "hemisphere_curve_point": hemisphere_curve_point_distance,
        "torus_circles": torus_meridian_distance,
        "strip_distance": lambda x: np.abs(np.asarray(x).reshape(-1, 3)[:, 0]),
    }
    try:
        return table[name]
    except KeyError:
        raise ValueError(f"no oracle named {name!r}") from None
