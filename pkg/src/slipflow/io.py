"""Writers for fields (legacy VTK), curves (CSV) and reports (JSON).

Every artifact can carry an environment echo: a flat dict (config hash,
mesh sizes, package version) written as the VTK title, as ``#`` comment
lines in CSV and as an ``environment`` entry in JSON.
"""

import csv
import hashlib
import json
import math
import platform
from pathlib import Path

import numpy as np

from . import reference as ref
from .fem import Family, Field

# VTK_BIQUADRATIC_QUAD and VTK_QUADRATIC_EDGE with our local -> VTK node order
VTK_QUAD9 = 28
VTK_EDGE3 = 21
QUAD9_ORDER = [0, 2, 8, 6, 1, 5, 7, 3, 4]
EDGE3_ORDER = [0, 2, 1]


def jsonable(x):
    """Recursively convert numpy scalars/arrays; non-finite floats become strings."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, Path):
        return str(x)
    return x


def config_hash(config):
    """sha256 of the canonical JSON form of a configuration mapping."""
    blob = json.dumps(jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def environment_echo(config=None, mesh=None, **extra):
    from . import __version__
    env = {"package": "slipflow", "version": __version__,
           "python": platform.python_version(), "numpy": np.__version__}
    if config is not None:
        env["config_hash"] = config_hash(config)
    if mesh is not None:
        env["mesh_cells"] = int(mesh.n_cells)
        env["mesh_points"] = int(mesh.n_points)
        env["mesh_dim"] = int(mesh.dim)
    env.update(extra)
    return env


def write_json(path, obj, environment=None):
    path = Path(path)
    data = dict(obj) if isinstance(obj, dict) else {"data": obj}
    if environment is not None:
        data["environment"] = environment
    path.write_text(json.dumps(jsonable(data), indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path, columns, environment=None):
    """Columns is an ordered mapping name -> 1D array (equal lengths)."""
    path = Path(path)
    names = list(columns)
    data = [np.asarray(columns[k], dtype=float).ravel() for k in names]
    n = {d.size for d in data}
    if len(n) > 1:
        raise ValueError(f"columns of unequal length: {sorted(n)}")
    with path.open("w", newline="") as fh:
        for k, v in (environment or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*data):
            w.writerow([repr(float(v)) for v in row])
    return path


def read_csv(path):
    """Inverse of write_csv (comment lines skipped); returns name -> array."""
    with Path(path).open() as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    names = rows[0]
    vals = np.array(rows[1:], dtype=float).reshape(-1, len(names))
    return {k: vals[:, i] for i, k in enumerate(names)}


def point_values(f):
    """Values of a field at every mesh point (Q1 pressure is interpolated)."""
    mesh = f.mesh
    fam = f.space.family
    if fam in (Family.VECTOR_Q2, Family.MIXED_Q2Q1):
        return f.velocity()
    if fam == Family.SCALAR_Q2:
        return f.values
    out = np.empty(mesh.n_points)
    if mesh.dim == 1:
        # piecewise linear between the cell end points
        loc = f.values[mesh.cells]
        out[mesh.cells_q2[:, 0]] = loc[:, 0]
        out[mesh.cells_q2[:, 2]] = loc[:, 1]
        out[mesh.cells_q2[:, 1]] = loc.mean(axis=1)
        return out
    xi = np.array([ref.local_node_reference(k) for k in range(9)])
    M, _ = ref.q1_basis(xi[:, 0], xi[:, 1])
    out[mesh.cells_q2] = f.values[mesh.cells] @ M.T
    return out


def write_vtk(path, mesh, fields=(), title=None, environment=None):
    """Legacy ASCII VTK unstructured grid with point data.

    ``fields`` holds Field objects or ``(name, array)`` pairs sized by the
    mesh points; 2-vectors are padded to 3 components.
    """
    path = Path(path)
    pts = np.zeros((mesh.n_points, 3))
    pts[:, : mesh.dim] = mesh.points.reshape(mesh.n_points, -1)
    if mesh.dim == 2:
        conn, ctype = mesh.cells_q2[:, QUAD9_ORDER], VTK_QUAD9
    else:
        conn, ctype = mesh.cells_q2[:, EDGE3_ORDER], VTK_EDGE3
    head = title or "slipflow"
    if environment:
        head += " " + json.dumps(jsonable(environment), sort_keys=True, separators=(",", ":"))
    head = head.replace("\n", " ")[:255]
    lines = ["# vtk DataFile Version 3.0", head, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_points} double"]
    lines += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in pts]
    nloc = conn.shape[1]
    lines.append(f"CELLS {conn.shape[0]} {conn.shape[0] * (nloc + 1)}")
    lines += [f"{nloc} " + " ".join(map(str, c)) for c in conn]
    lines.append(f"CELL_TYPES {conn.shape[0]}")
    lines += [str(ctype)] * conn.shape[0]
    items = []
    for f in fields:
        if isinstance(f, Field):
            items.append((f.name or "field", point_values(f)))
        else:
            items.append((f[0], np.asarray(f[1], dtype=float)))
    if items:
        lines.append(f"POINT_DATA {mesh.n_points}")
    for name, arr in items:
        name = name.replace(" ", "_")
        if arr.ndim == 1:
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [f"{v:.17g}" for v in arr]
        else:
            vec = np.zeros((arr.shape[0], 3))
            vec[:, : arr.shape[1]] = arr
            lines.append(f"VECTORS {name} double")
            lines += [f"{a:.17g} {b:.17g} {c:.17g}" for a, b, c in vec]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk_points(path):
    """Minimal reader: points, connectivity and named point arrays (round-trip checks)."""
    tok = Path(path).read_text().split("\n")
    i, out = 0, {"data": {}}
    while i < len(tok):
        line = tok[i].split()
        if not line:
            i += 1
            continue
        if line[0] == "POINTS":
            n = int(line[1])
            out["points"] = np.array([tok[i + 1 + k].split() for k in range(n)], dtype=float)
            i += n + 1
        elif line[0] == "CELLS":
            n = int(line[1])
            out["cells"] = np.array([tok[i + 1 + k].split()[1:] for k in range(n)], dtype=int)
            i += n + 1
        elif line[0] == "CELL_TYPES":
            n = int(line[1])
            out["types"] = np.array(tok[i + 1: i + 1 + n], dtype=int)
            i += n + 1
        elif line[0] == "SCALARS":
            n = out["points"].shape[0]
            out["data"][line[1]] = np.array(tok[i + 2: i + 2 + n], dtype=float)
            i += n + 2
        elif line[0] == "VECTORS":
            n = out["points"].shape[0]
            out["data"][line[1]] = np.array([tok[i + 1 + k].split() for k in range(n)],
                                            dtype=float)
            i += n + 1
        else:
            i += 1
    return out
