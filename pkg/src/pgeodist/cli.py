"""Command-line driver: ``pgeodist {solve,study,triangle,noise,gen-mesh}``.

Runs are described by a YAML file; command-line flags override its values
and ``PGEODIST_OUT`` overrides the output directory unless ``--out`` is
given. Every command writes a ``report.json`` whose ``config`` entry
re-creates the run.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import metrics, oracles, sfem
from .export import export_vtk, write_csv
from .fixtures import FIXTURES, generate_fixture
from .mesh import MeshError, TriangleMesh, load_mesh, mesh_stats, perturb_vertices, save_obj, \
    save_off, select_features
from .ppoisson import AdmmError, SolverConfig, continuation_solve

logger = logging.getLogger("pgeodist")

OUT_ENV = "PGEODIST_OUT"
EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass
class RunConfig:
    """Everything needed to reproduce a run.

    ``mesh`` holds either ``{"path": ..., "format": ...}`` or
    ``{"fixture": kind, "level": n, **params}``.
    """

    mesh: dict
    features: list = field(default_factory=list)
    solver: dict = field(default_factory=dict)
    oracle: str | None = None
    seed: int = 0
    out: str = "pgeodist-out"
    export: dict = field(default_factory=lambda: {"vtk": True, "csv": True, "report": True})
    triangle: dict = field(default_factory=dict)
    noise: dict = field(default_factory=dict)

    def __post_init__(self):
        has_path = "path" in self.mesh
        has_fixture = "fixture" in self.mesh
        if has_path == has_fixture:
            raise ConfigError("mesh needs exactly one of 'path' or 'fixture'")
        if has_fixture and self.mesh["fixture"] not in FIXTURES:
            raise ConfigError(f"unknown fixture {self.mesh['fixture']!r}")
        if self.oracle is not None:
            try:
                oracles.oracle_for(self.oracle)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        self.solver_config()

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "mesh" not in d:
            raise ConfigError("config has no 'mesh' entry")
        return cls(**d)

    def as_dict(self) -> dict:
        """Plain-data echo with the solver settings fully resolved."""
        d = dataclasses.asdict(self)
        d["solver"] = self.solver_config().as_dict()
        return json.loads(json.dumps(d))

    def solver_config(self) -> SolverConfig:
        try:
            return SolverConfig(**self.solver)
        except TypeError as exc:
            raise ConfigError(f"bad solver settings: {exc}") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


# -- setup helpers ------------------------------------------------------------


def build_mesh(cfg: RunConfig) -> TriangleMesh:
    spec = dict(cfg.mesh)
    if "path" in spec:
        return load_mesh(spec["path"], spec.get("format"))
    kind = spec.pop("fixture")
    level = spec.pop("level", 3)
    return generate_fixture(kind, level, **spec)


def _oracle_values(cfg: RunConfig, vertices, p):
    if cfg.oracle is None:
        return None
    f = oracles.oracle_for(cfg.oracle)
    return f(vertices, p) if cfg.oracle in oracles.P_DEPENDENT else f(vertices)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return out


def _history_rows(reports):
    for rep in reports:
        for k, (r, s, e, du) in enumerate(zip(rep.primal, rep.dual, rep.energy, rep.du), 1):
            yield [rep.p, k, r, s, e, du]


def _stage_summary(rep) -> dict:
    return {
        "p": rep.p,
        "iterations": rep.iterations,
        "reason": rep.reason,
        "primal": rep.primal[-1] if rep.primal else None,
        "dual": rep.dual[-1] if rep.dual else None,
        "wall_time": rep.wall_time,
    }


def _write_report(cfg: RunConfig, out: Path, name: str, body: dict) -> None:
    if cfg.export.get("report", True):
        doc = {"config": cfg.as_dict(), **body}
        (out / name).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _solve(mesh, partition, scfg):
    return continuation_solve(mesh, partition, scfg)


# -- commands -----------------------------------------------------------------


def cmd_solve(cfg: RunConfig) -> int:
    mesh = build_mesh(cfg)
    partition = select_features(mesh, cfg.features)
    reports = _solve(mesh, partition, cfg.solver_config())
    u = reports[-1].u
    out = _out_dir(cfg)
    if cfg.export.get("vtk", True):
        gn = np.linalg.norm(sfem.face_gradient(mesh, u), axis=1)
        export_vtk(mesh, out / "solution.vtk",
                   point_data={"u": u, "feature": partition.mask(mesh.n_vertices).astype(float)},
                   cell_data={"grad_norm": gn})
    if cfg.export.get("csv", True):
        write_csv(out / "history.csv", ["p", "iteration", "primal", "dual", "energy", "du"],
                  _history_rows(reports))
        np.savetxt(out / "u.csv", u, fmt="%.17g", header="u", comments="")
    _write_report(cfg, out, "report.json", {
        "command": "solve",
        "mesh": mesh_stats(mesh).as_dict(),
        "n_gamma1": int(partition.gamma1.size),
        "n_gamma2": int(partition.gamma2.size),
        "stages": [_stage_summary(r) for r in reports],
    })
    return EXIT_OK if all(r.converged for r in reports) else EXIT_FAILURE


def study_table(errors_l2, errors_smape, ps):
    """Rows ``p, L2, rate, SMAPE, rate`` with ``NA`` rates in the first row."""
    rl = ["NA"] + (metrics.convergence_rates(errors_l2) if len(ps) > 1 else [])
    rs = ["NA"] + (metrics.convergence_rates(errors_smape) if len(ps) > 1 else [])
    return [[p, l2, a, sm, b] for p, l2, a, sm, b in zip(ps, errors_l2, rl, errors_smape, rs)]


def cmd_study(cfg: RunConfig) -> int:
    if cfg.oracle is None:
        raise ConfigError("study needs an 'oracle'")
    mesh = build_mesh(cfg)
    partition = select_features(mesh, cfg.features)
    reports = _solve(mesh, partition, cfg.solver_config())
    ps, l2, sm, rows = [], [], [], []
    for rep in reports:
        d = _oracle_values(cfg, mesh.vertices, rep.p)
        er = metrics.error_report(mesh, rep.u, d)
        ps.append(rep.p)
        l2.append(er.l2_relative)
        sm.append(er.smape)
        rows.append([rep.p, er.l2_relative, er.smape, er.linf, er.n_skipped,
                     metrics.grad_deviation(mesh, rep.u), rep.iterations, rep.reason])
    out = _out_dir(cfg)
    table = study_table(l2, sm, ps)
    write_csv(out / "study.csv", ["p", "L2", "rate", "SMAPE", "rate"], table)
    write_csv(out / "errors.csv", ["p", "l2_relative", "smape", "linf", "n_skipped",
                                   "grad_deviation", "iterations", "reason"], rows)
    if cfg.export.get("csv", True):
        write_csv(out / "history.csv", ["p", "iteration", "primal", "dual", "energy", "du"],
                  _history_rows(reports))
    if cfg.export.get("vtk", True):
        d = _oracle_values(cfg, mesh.vertices, reports[-1].p)
        export_vtk(mesh, out / "study.vtk",
                   point_data={"u": reports[-1].u, "oracle": d, "error": reports[-1].u - d})
    _write_report(cfg, out, "report.json", {
        "command": "study",
        "mesh": mesh_stats(mesh).as_dict(),
        "stages": [_stage_summary(r) for r in reports],
        "table": [[x if isinstance(x, str) else float(x) for x in row] for row in table],
    })
    return EXIT_OK


def cmd_triangle(cfg: RunConfig, zero_u2: bool = False) -> int:
    tri = dict(cfg.triangle)
    sources = tri.get("sources")
    if not sources or len(sources) != 2:
        raise ConfigError("triangle needs 'sources': two feature selectors")
    zero_u2 = zero_u2 or bool(tri.get("zero_u2", False))
    mesh = build_mesh(cfg)
    parts = [select_features(mesh, [s]) for s in sources]
    q1, q2 = (int(pt.gamma1[0]) for pt in parts)
    base = cfg.solver_config()
    ps = [float(p) for p in tri.get("p", [base.p])]
    out = _out_dir(cfg)
    rows, audits = [], []
    for p in ps:
        scfg = dataclasses.replace(base, p=p, schedule=None,
                                   p_start=min(base.p_start, p))
        u1 = _solve(mesh, parts[0], scfg)[-1].u
        u2 = np.zeros_like(u1) if zero_u2 else _solve(mesh, parts[1], scfg)[-1].u
        if zero_u2:
            # keep d(q2, q1) positive so every vertex must fail
            u2[q1] = u1[q2]
        audit = metrics.triangle_audit(mesh, u1, u2, q1, q2)
        off_source = np.setdiff1d(audit.violating_vertices, [q1, q2]).size
        rows.append([p, q1, q2, audit.d12, audit.d21, audit.threshold,
                     audit.violations, off_source, mesh.n_vertices])
        audits.append({**audit.as_dict(), "p": p, "violations_off_source": int(off_source)})
        if cfg.export.get("vtk", True):
            export_vtk(mesh, out / f"triangle_p{p:g}.vtk",
                       point_data={"u1": u1, "u2": u2,
                                   "violation": (~audit.satisfied).astype(float)})
    write_csv(out / "triangle.csv", ["p", "q1", "q2", "d12", "d21", "threshold",
                                     "violations", "violations_off_source", "n_vertices"], rows)
    _write_report(cfg, out, "report.json", {
        "command": "triangle", "mesh": mesh_stats(mesh).as_dict(), "audits": audits,
    })
    return EXIT_OK


def cmd_noise(cfg: RunConfig) -> int:
    """Solve on vertex-perturbed copies. Features are picked on the clean
    mesh and the oracle is evaluated at the clean positions."""
    clean = build_mesh(cfg)
    ell = mesh_stats(clean).ell
    nz = dict(cfg.noise)
    if "sigmas" in nz:
        sigmas = [float(s) for s in nz["sigmas"]]
    else:
        sigmas = [float(k) * ell for k in nz.get("sigma_ell", [0.0, 0.125, 0.25, 0.5])]
    if any(s < 0 for s in sigmas):
        raise ConfigError("sigma must be nonnegative")
    partition = select_features(clean, cfg.features)
    scfg = cfg.solver_config()
    out = _out_dir(cfg)
    rows, stages = [], []
    for i, sigma in enumerate(sigmas):
        mesh = perturb_vertices(clean, sigma, cfg.seed)
        reports = _solve(mesh, partition, scfg)
        u = reports[-1].u
        row = [sigma, sigma / ell, reports[-1].iterations, reports[-1].reason]
        if cfg.oracle is not None:
            d = _oracle_values(cfg, clean.vertices, reports[-1].p)
            er = metrics.error_report(clean, u, d)
            row += [er.smape, er.l2_relative]
        rows.append(row)
        stages.append({"sigma": sigma, "stages": [_stage_summary(r) for r in reports]})
        if cfg.export.get("vtk", True):
            export_vtk(mesh, out / f"noise_{i}.vtk", point_data={"u": u})
        if cfg.export.get("csv", True):
            np.savetxt(out / f"noise_{i}_u.csv", u, fmt="%.17g", header="u", comments="")
    header = ["sigma", "sigma_over_ell", "iterations", "reason"]
    if cfg.oracle is not None:
        header += ["smape", "l2_relative"]
    write_csv(out / "noise.csv", header, rows)
    _write_report(cfg, out, "report.json", {
        "command": "noise", "mesh": mesh_stats(clean).as_dict(), "runs": stages,
    })
    return EXIT_OK


def cmd_gen_mesh(kind: str, level: int, path: Path, params: dict) -> int:
    mesh = generate_fixture(kind, level, **params)
    path.parent.mkdir(parents=True, exist_ok=True)
    (save_off if path.suffix.lower() == ".off" else save_obj)(mesh, path)
    st = mesh_stats(mesh)
    print(f"{path}: {st.n_vertices} vertices, {st.n_faces} faces, "
          f"ell={st.ell:.4g}, h={st.h:.4g}")
    return EXIT_OK


# -- argument handling --------------------------------------------------------


def _parse_schedule(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad schedule {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pgeodist", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def run_flags(sp):
        sp.add_argument("--config", type=Path, help="YAML run description")
        sp.add_argument("--mesh", help="OFF/OBJ mesh file (overrides the config)")
        sp.add_argument("--fixture", help="built-in mesh as KIND:LEVEL, e.g. torus:5")
        sp.add_argument("--p", type=float, help="final exponent")
        sp.add_argument("--beta", type=float, help="ADMM penalty")
        sp.add_argument("--schedule", type=_parse_schedule, help="comma-separated p values")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help=f"output directory (else ${OUT_ENV}, else config)")
        sp.add_argument("--oracle", help="reference distance name")

    for name, help_ in [("solve", "p-continuation solve with exports"),
                        ("study", "convergence-in-p table against an oracle"),
                        ("triangle", "two-source triangle-inequality audit"),
                        ("noise", "solve on vertex-perturbed meshes")]:
        sp = sub.add_parser(name, help=help_)
        run_flags(sp)
        if name == "triangle":
            sp.add_argument("--zero-u2", action="store_true",
                            help="debug: replace the second field by zeros")

    g = sub.add_parser("gen-mesh", help="write a built-in fixture mesh")
    g.add_argument("kind", choices=FIXTURES)
    g.add_argument("--level", type=int, default=3)
    g.add_argument("--out", type=Path, required=True, help="output .obj or .off path")
    g.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="fixture parameter, e.g. R=2")
    return ap


def resolve_config(args) -> RunConfig:
    raw = {}
    if args.config is not None:
        try:
            raw = yaml.safe_load(args.config.read_text()) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {args.config}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a mapping")
    if args.mesh:
        raw["mesh"] = {"path": args.mesh}
    if args.fixture:
        kind, _, level = args.fixture.partition(":")
        raw["mesh"] = {"fixture": kind, "level": int(level or 3)}
    solver = dict(raw.get("solver") or {})
    for key in ("p", "beta"):
        if getattr(args, key) is not None:
            solver[key] = getattr(args, key)
    if args.schedule is not None:
        solver["schedule"] = args.schedule
        solver["p"] = max(args.schedule)
    raw["solver"] = solver
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.oracle is not None:
        raw["oracle"] = args.oracle
    if args.out is not None:
        raw["out"] = args.out
    elif os.environ.get(OUT_ENV):
        raw["out"] = os.environ[OUT_ENV]
    return RunConfig.from_dict(raw)


def _fixture_params(pairs) -> dict:
    out = {}
    for item in pairs:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
        out[key] = yaml.safe_load(val)
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen-mesh":
            return cmd_gen_mesh(args.kind, args.level, args.out, _fixture_params(args.param))
        cfg = resolve_config(args)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "study":
            return cmd_study(cfg)
        if args.command == "triangle":
            return cmd_triangle(cfg, zero_u2=args.zero_u2)
        return cmd_noise(cfg)
    except (ConfigError, MeshError) as exc:
        print(f"pgeodist: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AdmmError, sfem.SfemError, ValueError) as exc:
        print(f"pgeodist: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
