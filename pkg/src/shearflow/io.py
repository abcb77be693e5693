"""Artifact writers: legacy VTK, CSV, JSON, JSON lines and Matrix Market."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import IoError


VTK_TRIANGLE = 5

# each P2 triangle (local nodes 0..5) becomes four linear triangles
_SUBTRIANGLES = np.array([[0, 3, 5], [3, 1, 4], [5, 4, 2], [3, 4, 5]])


def _fmt(x):
    return "%.17g" % x


def write_vtk(path, points, triangles, point_data=None, title="shearflow"):
    """Legacy ASCII ``UNSTRUCTURED_GRID`` with linear triangles.

    ``point_data`` maps names to arrays of shape ``(n,)`` (scalars) or
    ``(n, 2|3)`` (vectors, padded to three components).
    """
    points = np.asarray(points, dtype=float)
    if points.shape[1] == 2:
        points = np.column_stack([points, np.zeros(len(points))])
    tris = np.asarray(triangles, dtype=np.int64)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(points)} double"]
    lines += [" ".join(_fmt(v) for v in row) for row in points]
    lines.append(f"CELLS {len(tris)} {4 * len(tris)}")
    lines += ["3 " + " ".join(str(int(v)) for v in row) for row in tris]
    lines.append(f"CELL_TYPES {len(tris)}")
    lines += [str(VTK_TRIANGLE)] * len(tris)
    if point_data:
        lines.append(f"POINT_DATA {len(points)}")
        for name, arr in point_data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.ndim == 1:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [_fmt(v) for v in arr]
            else:
                if arr.shape[1] == 2:
                    arr = np.column_stack([arr, np.zeros(len(arr))])
                lines.append(f"VECTORS {name} double")
                lines += [" ".join(_fmt(v) for v in row) for row in arr]
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_vtk(path):
    """Parse files written by :func:`write_vtk`.

    Returns ``(points, triangles, point_data)``.
    """
    tokens = Path(path).read_text().split("\n")
    it = iter(tokens)
    points = tris = None
    data = {}
    for line in it:
        head = line.split()
        if not head:
            continue
        if head[0] == "POINTS":
            n = int(head[1])
            points = np.array([[float(v) for v in next(it).split()] for _ in range(n)])
        elif head[0] == "CELLS":
            n = int(head[1])
            tris = np.array([[int(v) for v in next(it).split()[1:]] for _ in range(n)])
        elif head[0] == "SCALARS":
            name = head[1]
            next(it)  # lookup table
            data[name] = np.array([float(next(it)) for _ in range(len(points))])
        elif head[0] == "VECTORS":
            name = head[1]
            data[name] = np.array([[float(v) for v in next(it).split()]
                                   for _ in range(len(points))])
    if points is None or tris is None:
        raise IoError(f"{path} is not an unstructured grid")
    return points, tris, data


def p2_subtriangles(space):
    return space.cell_nodes[:, _SUBTRIANGLES].reshape(-1, 3)


def export_vtk(solution, path):
    """Velocity ``v = u + a``, pressure and ``|D(v)|`` at the P2 nodes."""
    s = solution.space
    p1 = solution.pressure
    pres = np.concatenate([p1, p1[s.edges].mean(axis=1)])
    write_vtk(path, s.node_coords, p2_subtriangles(s),
              {"velocity": solution.nodal_velocity(), "pressure": pres,
               "strain_norm": solution.nodal_strain_norm()})


def _clean(obj):
    """Convert numpy scalars and arrays to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n")


def write_jsonl(path, records):
    with open(path, "w", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(_clean(rec), sort_keys=True) + "\n")


def write_csv(path, columns, header=None):
    """Write equal-length columns; floats as ``%.17g``, strings verbatim."""
    header = list(columns) if header is None else header
    n = len(next(iter(columns.values()))) if columns else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(n):
            row = []
            for name in header:
                v = columns[name][i]
                if isinstance(v, (float, np.floating)):
                    row.append(_fmt(float(v)))
                elif isinstance(v, (bool, np.bool_)):
                    row.append(str(bool(v)).lower())
                elif isinstance(v, (int, np.integer)):
                    row.append(str(int(v)))
                else:
                    row.append("" if v is None else str(v))
            w.writerow(row)


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def export_matrix_market(A, path, comment=""):
    from .fem.assembly import export_matrix_market as _mm
    _mm(A, path, comment)
