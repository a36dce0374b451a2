"""Legacy ASCII VTK output of triangle meshes and a reader for round trips."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

VTK_TRIANGLE = 5


class VTKError(OSError):
    pass


@dataclass
class VTKData:
    points: np.ndarray
    triangles: np.ndarray
    point_data: dict = field(default_factory=dict)
    cell_data: dict = field(default_factory=dict)
    title: str = ""


def _fmt(a: np.ndarray) -> str:
    return "\n".join(" ".join("%.17g" % v for v in row) for row in np.atleast_2d(a))


def _data_block(data: dict, n: int) -> list:
    out = []
    for name, arr in data.items():
        arr = np.asarray(arr)
        if " " in name:
            raise ValueError(f"array name {name!r} contains a space")
        if arr.shape[0] != n:
            raise ValueError(f"array {name!r} has {arr.shape[0]} entries, expected {n}")
        if arr.ndim == 1:
            kind = "int" if np.issubdtype(arr.dtype, np.integer) else "double"
            out += [f"SCALARS {name} {kind} 1", "LOOKUP_TABLE default",
                    "\n".join(str(int(v)) if kind == "int" else "%.17g" % v for v in arr)]
        elif arr.ndim == 2 and arr.shape[1] in (2, 3):
            vec = np.zeros((n, 3))
            vec[:, :arr.shape[1]] = arr
            out += [f"VECTORS {name} double", _fmt(vec)]
        else:
            raise ValueError(f"array {name!r} must be scalar or 2/3-vector valued")
    return out


def write_vtk(path, data: VTKData) -> Path:
    path = Path(path)
    pts = np.asarray(data.points, float)
    tri = np.asarray(data.triangles, dtype=np.int64)
    n, c = len(pts), len(tri)
    xyz = np.zeros((n, 3))
    xyz[:, :pts.shape[1]] = pts
    lines = ["# vtk DataFile Version 3.0", data.title or "micromorph2d", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double", _fmt(xyz) if n else "",
             f"CELLS {c} {4 * c}", "\n".join(f"3 {a} {b} {d}" for a, b, d in tri),
             f"CELL_TYPES {c}", "\n".join([str(VTK_TRIANGLE)] * c)]
    if data.point_data:
        lines += [f"POINT_DATA {n}"] + _data_block(data.point_data, n)
    if data.cell_data:
        lines += [f"CELL_DATA {c}"] + _data_block(data.cell_data, c)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(l for l in lines if l != "") + "\n")
    except OSError as exc:
        raise VTKError(f"cannot write {path}: {exc.strerror}") from None
    return path


def read_vtk(path) -> VTKData:
    """Read files produced by :func:`write_vtk`."""
    path = Path(path)
    try:
        tokens = path.read_text().split("\n")
    except OSError as exc:
        raise VTKError(f"cannot read {path}: {exc.strerror}") from None
    if not tokens or not tokens[0].startswith("# vtk DataFile"):
        raise VTKError(f"{path}: not a legacy VTK file")
    title = tokens[1] if len(tokens) > 1 else ""
    words = " ".join(tokens[2:]).split()
    pos = 0

    def take(k):
        nonlocal pos
        out = words[pos:pos + k]
        if len(out) < k:
            raise VTKError(f"{path}: unexpected end of file")
        pos += k
        return out

    pts = tri = None
    pdata, cdata = {}, {}
    target = None
    while pos < len(words):
        kw = take(1)[0]
        if kw in ("ASCII", "DATASET", "UNSTRUCTURED_GRID"):
            continue
        if kw == "POINTS":
            n, _ = take(2)
            pts = np.array(take(3 * int(n)), float).reshape(-1, 3)
        elif kw == "CELLS":
            c, size = (int(v) for v in take(2))
            raw = np.array(take(size), dtype=np.int64).reshape(c, 4)
            tri = raw[:, 1:]
        elif kw == "CELL_TYPES":
            c = int(take(1)[0])
            take(c)
        elif kw == "POINT_DATA":
            take(1)
            target = pdata
        elif kw == "CELL_DATA":
            take(1)
            target = cdata
        elif kw == "SCALARS":
            name, kind, _ = take(3)
            take(2)
            n = len(pts) if target is pdata else len(tri)
            vals = take(n)
            target[name] = np.array(vals, dtype=np.int64 if kind == "int" else float)
        elif kw == "VECTORS":
            name, _ = take(2)
            n = len(pts) if target is pdata else len(tri)
            target[name] = np.array(take(3 * n), float).reshape(n, 3)
        else:
            raise VTKError(f"{path}: unsupported keyword {kw!r}")
    if pts is None or tri is None:
        raise VTKError(f"{path}: missing POINTS or CELLS")
    return VTKData(pts[:, :2], tri, pdata, cdata, title)


def solution_vtk(sol) -> VTKData:
    """Sample a solution at the vertices of every cell.

    Each cell gets its own three points so discontinuous fields keep their
    one-sided values.  Arrays: ``u``, ``norm_D`` (Frobenius norm of the
    trace-free micro field, ``dev P`` for the unsplit model), ``tr_I`` (trace
    of the spherical part) and the cell data ``region``.
    """
    from .elements import REF_VERTICES
    from .system import evaluate_fields
    from .tensorops import dev

    mesh = sol.spaces.mesh
    cells = np.arange(mesh.n_cells)
    ev = evaluate_fields(sol, cells, REF_VERTICES)
    m = sol.spaces.micro_name
    micro = ev[m]
    devpart = dev(micro)
    if "I" in ev:
        sph = ev["I"] + (micro - devpart)
    else:
        sph = micro - devpart
    pts = ev["_x"].reshape(-1, 2)
    tri = np.arange(3 * mesh.n_cells).reshape(-1, 3)
    pdata = {
        "u": ev["u"].reshape(-1, 2),
        "norm_D": np.sqrt((devpart**2).sum(axis=(-1, -2))).ravel(),
        "tr_I": (sph[..., 0, 0] + sph[..., 1, 1]).ravel(),
    }
    return VTKData(pts, tri, pdata, {"region": mesh.cell_regions.astype(np.int64)},
                   f"micromorph2d {sol.spaces.formulation}")


def emit_fields(sol, path) -> Path:
    return write_vtk(path, solution_vtk(sol))
