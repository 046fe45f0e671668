"""ADMM solver for the surface p-Poisson problem

    minimise  (1/p) int |grad u|^p - int u,   u = 0 on the feature set,

with a natural (homogeneous Neumann) condition on the rest of the boundary.
The splitting introduces a per-face slack ``xi = grad u`` and multipliers
``y``; each iteration does a per-face scalar root solve, one Poisson solve
with a fixed (pre-factorized) matrix, and a dual ascent step.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import sfem
from .mesh import BoundaryPartition, TriangleMesh

logger = logging.getLogger(__name__)

GNORM_ZERO = 1e-14
STAGNATION_TOL = 1e-12


class AdmmError(RuntimeError):
    """Non-finite iterate or a failed per-face root solve."""


@dataclass(frozen=True)
class SolverConfig:
    """ADMM parameters.

    ``schedule`` lists the p values of a continuation run; when ``None`` the
    run starts at ``p_start`` and doubles until ``p`` is reached.
    """

    p: float = 5.0
    beta: float = 10.0
    tol_primal: float = 1e-6
    tol_dual: float = 1e-3
    max_iters: int = 2000
    newton_tol: float = 1e-12
    newton_max: int = 50
    schedule: tuple | None = None
    p_start: float = 5.0

    def __post_init__(self):
        if not self.p >= 2:
            raise ValueError("p must be >= 2")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not (self.tol_primal > 0 and self.tol_dual > 0 and self.newton_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1 or self.newton_max < 1:
            raise ValueError("iteration caps must be positive")
        if self.schedule is not None:
            sched = tuple(float(q) for q in self.schedule)
            if not sched or any(q < 2 for q in sched):
                raise ValueError("schedule entries must be >= 2")
            if any(b <= a for a, b in zip(sched, sched[1:])):
                raise ValueError("schedule must be strictly increasing")
            object.__setattr__(self, "schedule", sched)

    def p_values(self) -> list[float]:
        if self.schedule is not None:
            return list(self.schedule)
        ps, q = [], float(self.p_start)
        while q < self.p:
            ps.append(q)
            q *= 2
        ps.append(float(self.p))
        return ps

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["schedule"] is not None:
            d["schedule"] = list(d["schedule"])
        return d


@dataclass
class AdmmState:
    u: np.ndarray
    xi: np.ndarray
    y: np.ndarray
    iteration: int = 0

    def copy(self) -> "AdmmState":
        return AdmmState(self.u.copy(), self.xi.copy(), self.y.copy(), self.iteration)


@dataclass
class SolveReport:
    """Outcome and per-iteration histories of one ADMM run."""

    p: float
    state: AdmmState
    primal: list = field(default_factory=list)
    dual: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    du: list = field(default_factory=list)
    reason: str = ""
    wall_time: float = 0.0

    @property
    def u(self) -> np.ndarray:
        return self.state.u

    @property
    def iterations(self) -> int:
        return len(self.primal)

    @property
    def converged(self) -> bool:
        return self.reason in ("tolerance", "stagnation")


# -- per-face scalar problem -------------------------------------------------


def xi_root_array(gnorm, p: float, beta: float, tol: float = 1e-12, maxit: int = 50,
                  guess=None):
    """Vectorised root ``c`` in [0, 1] of
    ``gnorm^(p-2) c^(p-1) + beta (c - 1) = 0``.

    Safeguarded Newton: the left side is convex and increasing in ``c``, so
    every Newton step lands right of the root and then descends
    monotonically; a step leaving the current bracket falls back to
    bisection. ``gnorm^(p-2)`` is carried in log form so p in the hundreds
    cannot overflow.

    Parameters
    ----------
    guess : array_like, optional
        Starting values (e.g. the roots from the previous ADMM iteration).
        Defaults to ``min(1, (beta / gnorm^(p-2))^(1/(p-1)))``, which lies
        right of the root.

    Returns
    -------
    c : np.ndarray
    residual : np.ndarray
        Equation residual at ``c``.
    """
    g = np.asarray(gnorm, dtype=float)
    if np.any(~np.isfinite(g)) or np.any(g < 0):
        raise AdmmError("gradient norms must be finite and nonnegative")
    pm1 = p - 1.0
    with np.errstate(divide="ignore"):
        loga = np.zeros_like(g) if p == 2 else (p - 2.0) * np.log(g)
    # c0 = (beta / a)^(1/(p-1)) satisfies f(c0) = beta c0 > 0
    hi = np.minimum(1.0, np.exp((math.log(beta) - loga) / pm1))
    if guess is None:
        c = hi.copy()
    else:
        c = np.clip(np.asarray(guess, dtype=float), 0.0, hi)
    lo = np.zeros_like(g)

    def f_and_df(cc, la):
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.exp(la + pm1 * np.log(cc))
            slope = np.where(cc > 0, pm1 * term / cc, 0.0)
        return term + beta * (cc - 1.0), slope + beta

    f, df = f_and_df(c, loga)
    idx = np.flatnonzero(np.abs(f) > tol * beta)
    ci, fi, dfi, la = c[idx], f[idx], df[idx], loga[idx]
    lo_i, hi_i = lo[idx], hi[idx]
    for _ in range(maxit):
        if idx.size == 0:
            break
        pos = fi > 0
        hi_i = np.where(pos, ci, hi_i)
        lo_i = np.where(pos, lo_i, ci)
        step = ci - fi / dfi
        bad = ~((step >= lo_i) & (step <= hi_i)) | ~np.isfinite(step)
        if bad.any():
            step = np.where(bad, 0.5 * (lo_i + hi_i), step)
        fi, dfi = f_and_df(step, la)
        ci = step
        c[idx], f[idx] = ci, fi
        keep = np.abs(fi) > tol * beta
        if not keep.all():
            idx, ci, fi, dfi, la = idx[keep], ci[keep], fi[keep], dfi[keep], la[keep]
            lo_i, hi_i = lo_i[keep], hi_i[keep]
    if idx.size:
        raise AdmmError(f"xi root solve did not converge on {idx.size} faces")
    return c, f


def xi_root(gnorm: float, p: float, beta: float, cfg: SolverConfig | None = None) -> float:
    """Scalar form of :func:`xi_root_array`."""
    tol = cfg.newton_tol if cfg else 1e-12
    maxit = cfg.newton_max if cfg else 50
    c, _ = xi_root_array(np.array([gnorm]), p, beta, tol, maxit)
    return float(c[0])


# -- ADMM steps ----------------------------------------------------------------


def prepare_system(mesh: TriangleMesh, partition: BoundaryPartition) -> sfem.SpdSystem:
    """Dirichlet-constrained stiffness matrix, factorized once."""
    K = sfem.assemble_stiffness(mesh)
    system, _ = sfem.constrain_dirichlet(K, np.zeros(mesh.n_vertices), partition.gamma1)
    system.factor()
    return system


def xi_update(state: AdmmState, mesh: TriangleMesh, cfg: SolverConfig) -> np.ndarray:
    """Per face ``xi = c (grad u - y / beta)`` with ``c`` from the scalar root."""
    g = sfem.face_gradient(mesh, state.u) - state.y / cfg.beta
    gn = np.linalg.norm(g, axis=1)
    c, _ = xi_root_array(gn, cfg.p, cfg.beta, cfg.newton_tol, cfg.newton_max)
    c[gn < GNORM_ZERO] = 0.0
    return c[:, None] * g


def u_update(state: AdmmState, mesh: TriangleMesh, partition: BoundaryPartition,
             cfg: SolverConfig, system: sfem.SpdSystem) -> np.ndarray:
    """Poisson step ``K u = div_rhs(xi + y / beta) + load / beta``, ``u = 0``
    on gamma1. ``system`` must already carry the gamma1 constraint."""
    rhs = sfem.assemble_div_rhs(mesh, state.xi + state.y / cfg.beta)
    rhs += sfem.assemble_load(mesh) / cfg.beta
    rhs[partition.gamma1] = 0.0
    u = sfem.solve_spd(system, rhs)
    u[partition.gamma1] = 0.0
    return u


def dual_update(state: AdmmState, grad_u: np.ndarray, beta: float) -> np.ndarray:
    """``y + beta (xi - grad u)`` for already-updated ``xi`` and ``u``."""
    return state.y + beta * (state.xi - grad_u)


def initial_state(mesh: TriangleMesh, partition: BoundaryPartition,
                  cfg: SolverConfig, system: sfem.SpdSystem) -> AdmmState:
    """``xi = y = 0`` and ``u`` from ``-Lap u = 1 / beta``."""
    m = mesh.n_faces
    zero = AdmmState(np.zeros(mesh.n_vertices), np.zeros((m, 3)), np.zeros((m, 3)))
    zero.u = u_update(zero, mesh, partition, cfg, system)
    return zero


def face_l2_norm(mesh: TriangleMesh, w: np.ndarray) -> float:
    """Area-weighted L2 norm of a per-face vector field."""
    return float(np.sqrt(np.sum(mesh.face_areas * np.einsum("ij,ij->i", w, w))))


def energy(mesh: TriangleMesh, u, p: float) -> float:
    """``(1/p) int |grad u|^p - int u`` with exact per-face gradients and
    nodal quadrature for the linear term.

    Returns ``inf`` with a ``RuntimeWarning`` when the gradient term is not
    representable in double precision.
    """
    u = np.asarray(u, dtype=float)
    gn = np.linalg.norm(sfem.face_gradient(mesh, u), axis=1)
    lin = float(sfem.assemble_load(mesh) @ u)
    nz = gn > 0
    if not nz.any():
        return -lin
    logs = np.log(mesh.face_areas[nz]) + p * np.log(gn[nz])
    top = logs.max()
    log_total = top + math.log(np.exp(logs - top).sum()) - math.log(p)
    if log_total > 709.0:
        warnings.warn("energy gradient term overflows; returning inf",
                      RuntimeWarning, stacklevel=2)
        return math.inf
    return math.exp(log_total) - lin


def admm_solve(mesh: TriangleMesh, partition: BoundaryPartition, cfg: SolverConfig,
               warm_start: AdmmState | None = None,
               system: sfem.SpdSystem | None = None) -> SolveReport:
    """Run ADMM at exponent ``cfg.p`` until both residual norms are below
    tolerance, ``u`` stops changing, or ``cfg.max_iters`` is hit.

    Parameters
    ----------
    warm_start : AdmmState, optional
        Iterates (u, xi, y) to continue from, e.g. the previous p stage.
    system : SpdSystem, optional
        Reuse a constrained, factorized stiffness matrix.
    """
    t0 = time.perf_counter()
    if system is None:
        system = prepare_system(mesh, partition)
    if warm_start is None:
        state = initial_state(mesh, partition, cfg, system)
    else:
        state = warm_start.copy()
        state.iteration = 0
    beta = cfg.beta
    report = SolveReport(p=cfg.p, state=state)
    reason = "max_iters"
    for k in range(1, cfg.max_iters + 1):
        xi_old = state.xi
        u_old = state.u
        state.xi = xi_update(state, mesh, cfg)
        state.u = u_update(state, mesh, partition, cfg, system)
        grad_u = sfem.face_gradient(mesh, state.u)
        state.y = dual_update(state, grad_u, beta)
        state.iteration = k

        rk = face_l2_norm(mesh, state.xi - grad_u)
        sk = beta * face_l2_norm(mesh, state.xi - xi_old)
        du = float(np.max(np.abs(state.u - u_old)))
        if not (np.isfinite(rk) and np.isfinite(sk) and np.isfinite(du)):
            raise AdmmError(f"non-finite iterate at iteration {k} (p={cfg.p:g})")
        report.primal.append(rk)
        report.dual.append(sk)
        report.du.append(du)
        report.energy.append(energy(mesh, state.u, cfg.p))
        if k % 100 == 0:
            logger.debug("p=%g it=%d r=%.3e s=%.3e du=%.3e", cfg.p, k, rk, sk, du)
        if rk < cfg.tol_primal and sk < cfg.tol_dual:
            reason = "tolerance"
            break
        if du < STAGNATION_TOL:
            reason = "stagnation"
            break
    report.reason = reason
    report.wall_time = time.perf_counter() - t0
    logger.info("p=%g finished after %d iterations (%s) in %.2fs",
                cfg.p, report.iterations, reason, report.wall_time)
    return report


def continuation_solve(mesh: TriangleMesh, partition: BoundaryPartition,
                       cfg: SolverConfig, warm_start: AdmmState | None = None,
                       system: sfem.SpdSystem | None = None) -> list[SolveReport]:
    """Solve for each p of ``cfg.p_values()`` in turn, warm-starting every
    stage from the previous stage's (u, xi, y)."""
    if system is None:
        system = prepare_system(mesh, partition)
    reports = []
    state = warm_start
    for p in cfg.p_values():
        stage = dataclasses.replace(cfg, p=p, schedule=None)
        rep = admm_solve(mesh, partition, stage, warm_start=state, system=system)
        reports.append(rep)
        state = rep.state
    return reports
