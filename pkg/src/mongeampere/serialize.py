"""JSON-style dictionaries and CSV tables for functions, measures and meshes.

Schema (all arrays are plain lists of floats):

mesh     {"kind", "dim", "domain", "nodes", "boundary", "cells"?, "gap"?}
function {"mesh", "values", "slopes"?, "mid_values"?}
measure  {"mesh", "atoms": [[index, x..., mass], ...], "densities": [cell masses], "clipped"}

Floats are written with 17 significant digits so that a round trip is exact
and repeated runs give byte-identical output.
"""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .convex import ConvexFn, DiscreteMeasure
from .geometry import Mesh, domain_from_dict


def fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _floats(a):
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def mesh_to_dict(mesh: Mesh) -> dict:
    out = {
        "kind": mesh.kind,
        "dim": int(mesh.dim),
        "domain": mesh.domain.to_dict(),
        "nodes": np.asarray(mesh.nodes, dtype=float).tolist(),
        "boundary": [bool(b) for b in mesh.boundary],
    }
    out["cells"] = np.asarray(mesh.cells, dtype=int).tolist()
    if mesh.gap is not None:
        out["gap"] = _floats(mesh.gap)
    return out


def mesh_from_data(d: dict) -> Mesh:
    domain = domain_from_dict(d["domain"])
    nodes = np.asarray(d["nodes"], dtype=float)
    boundary = np.asarray(d["boundary"], dtype=bool)
    kind = d["kind"]
    cells = np.asarray(d["cells"], dtype=int).reshape(-1, 3 if kind == "grid2d" else 2)
    gap = np.asarray(d["gap"], dtype=float) if "gap" in d else None
    return Mesh(kind, nodes, boundary, cells, domain, int(d["dim"]), gap)


def fn_to_dict(u: ConvexFn, include_mesh: bool = True) -> dict:
    out = {"values": _floats(u.values)}
    if u.slopes is not None:
        out["slopes"] = _floats(u.slopes)
    if u.mid_values is not None:
        out["mid_values"] = _floats(u.mid_values)
    if include_mesh:
        out["mesh"] = mesh_to_dict(u.mesh)
    return out


def fn_from_dict(d: dict, mesh: Mesh | None = None) -> ConvexFn:
    mesh = mesh if mesh is not None else mesh_from_data(d["mesh"])
    return ConvexFn(mesh, np.asarray(d["values"], dtype=float), d.get("slopes"), d.get("mid_values"))


def _positions(mesh: Mesh, idx):
    p = np.asarray(mesh.nodes, dtype=float)[idx]
    return [float(p)] if p.ndim == 0 else _floats(p)


def measure_to_dict(nu: DiscreteMeasure, include_mesh: bool = True) -> dict:
    idx = np.nonzero(nu.atoms)[0]
    out = {
        "atoms": [[int(i), *_positions(nu.mesh, i), float(nu.atoms[i])] for i in idx],
        "densities": _floats(nu.cells),
        "clipped": int(nu.clipped),
    }
    if include_mesh:
        out["mesh"] = mesh_to_dict(nu.mesh)
    return out


def measure_from_dict(d: dict, mesh: Mesh | None = None) -> DiscreteMeasure:
    mesh = mesh if mesh is not None else mesh_from_data(d["mesh"])
    atoms = np.zeros(mesh.n_nodes)
    for row in d["atoms"]:
        atoms[int(row[0])] = float(row[-1])
    return DiscreteMeasure(mesh, atoms, np.asarray(d["densities"], dtype=float), int(d.get("clipped", 0)))


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=1)


def _clean(obj):
    """Replace non-finite floats by strings; JSON has no inf/nan."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else fmt(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def table_csv(header, rows, units=None) -> str:
    """CSV text; the header carries units as ``name [unit]``.  Floats use :func:`fmt`."""
    units = units or {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"{h} [{units[h]}]" if units.get(h) else h for h in header])
    for r in rows:
        vals = r if isinstance(r, (list, tuple)) else [r[h] for h in header]
        w.writerow([_cell(v) for v in vals])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    return "" if v is None else str(v)


def measure_csv(nu: DiscreteMeasure) -> str:
    """(x, y, mass) rows: atoms at nodes, cell masses at cell midpoints (y = 0 in 1D)."""
    rows = []
    nodes = np.asarray(nu.mesh.nodes, dtype=float)
    mids = np.asarray(nu.mesh.cell_midpoints, dtype=float)

    def xy(p):
        p = np.atleast_1d(p)
        return float(p[0]), float(p[1]) if p.size > 1 else 0.0

    for i in np.nonzero(nu.atoms)[0]:
        rows.append((*xy(nodes[i]), float(nu.atoms[i])))
    for j in np.nonzero(nu.cells)[0]:
        rows.append((*xy(mids[j]), float(nu.cells[j])))
    return table_csv(("x", "y", "mass"), rows, {"x": "length", "y": "length", "mass": "volume"})


def fn_csv(u: ConvexFn) -> str:
    nodes = np.asarray(u.mesh.nodes, dtype=float)
    rows = []
    for i in range(u.mesh.n_nodes):
        p = np.atleast_1d(nodes[i])
        rows.append((float(p[0]), float(p[1]) if p.size > 1 else 0.0, float(u.values[i])))
    return table_csv(("x", "y", "u"), rows, {"x": "length", "y": "length", "u": "value"})
