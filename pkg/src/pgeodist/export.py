"""Writers for legacy ASCII VTK PolyData and CSV tables."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .mesh import TriangleMesh


def _fmt(x: float) -> str:
    return repr(float(x))


def export_vtk(mesh: TriangleMesh, path, point_data=None, cell_data=None,
               title: str = "pgeodist") -> None:
    """Write ``mesh`` with named per-vertex and per-face fields.

    ``point_data`` and ``cell_data`` map names to arrays. One-dimensional
    arrays become SCALARS; arrays of shape ``(n, 3)`` become VECTORS. Fields
    are written in the order given.
    """
    point_data = dict(point_data or {})
    cell_data = dict(cell_data or {})
    for name, arr in point_data.items():
        if len(arr) != mesh.n_vertices:
            raise ValueError(f"point field {name!r} has {len(arr)} values, "
                             f"expected {mesh.n_vertices}")
    for name, arr in cell_data.items():
        if len(arr) != mesh.n_faces:
            raise ValueError(f"cell field {name!r} has {len(arr)} values, "
                             f"expected {mesh.n_faces}")
    lines = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET POLYDATA",
        f"POINTS {mesh.n_vertices} double",
    ]
    lines += [" ".join(map(_fmt, v)) for v in mesh.vertices]
    lines.append(f"POLYGONS {mesh.n_faces} {4 * mesh.n_faces}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]

    def block(fields):
        out = []
        for name, arr in fields.items():
            arr = np.asarray(arr, dtype=float)
            key = name.replace(" ", "_")
            if arr.ndim == 1:
                out += [f"SCALARS {key} double 1", "LOOKUP_TABLE default"]
                out += [_fmt(x) for x in arr]
            elif arr.ndim == 2 and arr.shape[1] == 3:
                out.append(f"VECTORS {key} double")
                out += [" ".join(map(_fmt, row)) for row in arr]
            else:
                raise ValueError(f"field {name!r} must have shape (n,) or (n, 3)")
        return out

    if point_data:
        lines.append(f"POINT_DATA {mesh.n_vertices}")
        lines += block(point_data)
    if cell_data:
        lines.append(f"CELL_DATA {mesh.n_faces}")
        lines += block(cell_data)
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk_header_counts(path) -> dict:
    """Declared POINTS / POLYGONS / *_DATA counts of a legacy VTK file."""
    counts = {}
    for line in Path(path).read_text().splitlines():
        tok = line.split()
        if tok and tok[0] in ("POINTS", "POLYGONS", "POINT_DATA", "CELL_DATA"):
            counts[tok[0]] = int(tok[1])
    return counts


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(x) for x in row])


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def read_vertex_field_csv(path, n_vertices: int | None = None) -> np.ndarray:
    """Load an externally computed per-vertex field.

    Accepts a single column of values, or two columns ``vertex,value``; a
    non-numeric first row is treated as a header.
    """
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if row:
                rows.append(row)
    try:
        float(rows[0][-1])
    except ValueError:
        rows = rows[1:]
    if all(len(r) == 1 for r in rows):
        vals = np.array([float(r[0]) for r in rows])
    else:
        idx = np.array([int(r[0]) for r in rows])
        vals = np.empty(len(rows))
        vals[idx] = [float(r[1]) for r in rows]
    if n_vertices is not None and len(vals) != n_vertices:
        raise ValueError(f"{path}: {len(vals)} values for {n_vertices} vertices")
    return vals
