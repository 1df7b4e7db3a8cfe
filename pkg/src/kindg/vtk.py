"""VTK legacy ASCII output of nodal fields, plus a minimal reader for checks.

Each subcell's Gauss-Lobatto nodes are split into d^D quads (hexahedra in
3D); node coordinates are duplicated between subcells, as the fields are
discontinuous.
"""
import numpy as np

VTK_QUAD = 9
VTK_HEXAHEDRON = 12
VTK_VERTEX = 1


def _local_cells(dim, degree):
    n = degree + 1
    if degree == 0:
        return np.zeros((1, 1), dtype=np.int64), VTK_VERTEX
    if dim == 1:
        return np.array([[i, i + 1] for i in range(degree)], dtype=np.int64), 3   # VTK_LINE
    if dim == 2:
        cells = [[i + n * j, i + 1 + n * j, i + 1 + n * (j + 1), i + n * (j + 1)]
                 for j in range(degree) for i in range(degree)]
        return np.array(cells, dtype=np.int64), VTK_QUAD
    cells = []
    for k in range(degree):
        for j in range(degree):
            for i in range(degree):
                q = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
                bottom = [a + n * b + n * n * k for a, b in q]
                top = [a + n * b + n * n * (k + 1) for a, b in q]
                cells.append(bottom + top)
    return np.array(cells, dtype=np.int64), VTK_HEXAHEDRON


def write_vtk(path, mesh, scalars=None, vectors=None, title="kindg output"):
    """``scalars``/``vectors``: name -> array shaped (n_macro, n_loc) / (n_macro, D, n_loc)."""
    D, d = mesh.dim, mesh.degree
    pts = mesh.points().reshape(-1, D)
    n_pts = pts.shape[0]
    N = mesh.ref.n_nodes
    local, ctype = _local_cells(D, d)
    n_blocks = n_pts // N
    cells = (local[None] + (np.arange(n_blocks) * N)[:, None, None]).reshape(-1, local.shape[1])
    pts3 = np.zeros((n_pts, 3))
    pts3[:, :D] = pts
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title.replace("\n", " ")[:255] + "\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {n_pts} double\n")
        np.savetxt(fh, pts3, fmt="%.12g")
        k = cells.shape[1]
        fh.write(f"CELLS {cells.shape[0]} {cells.shape[0] * (k + 1)}\n")
        np.savetxt(fh, np.column_stack([np.full(cells.shape[0], k), cells]), fmt="%d")
        fh.write(f"CELL_TYPES {cells.shape[0]}\n")
        np.savetxt(fh, np.full(cells.shape[0], ctype), fmt="%d")
        if scalars or vectors:
            fh.write(f"POINT_DATA {n_pts}\n")
        for name, arr in (scalars or {}).items():
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            np.savetxt(fh, np.asarray(arr, dtype=float).reshape(-1), fmt="%.12g")
        for name, arr in (vectors or {}).items():
            a = np.moveaxis(np.asarray(arr, dtype=float), 1, -1).reshape(-1, D)
            v3 = np.zeros((n_pts, 3))
            v3[:, :D] = a
            fh.write(f"VECTORS {name} double\n")
            np.savetxt(fh, v3, fmt="%.12g")
    return path


def read_vtk(path):
    """Parse the subset written by ``write_vtk``; returns a dict of arrays."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    if not tokens[0].startswith("# vtk DataFile"):
        raise ValueError(f"{path}: not a VTK legacy file")
    if tokens[2].strip() != "ASCII" or tokens[3].split() != ["DATASET", "UNSTRUCTURED_GRID"]:
        raise ValueError(f"{path}: only ASCII UNSTRUCTURED_GRID is supported")
    out = {"title": tokens[1], "point_data": {}}
    words = " ".join(tokens[4:]).split()
    pos = 0

    def take(n, conv=float):
        nonlocal pos
        vals = np.array([conv(w) for w in words[pos:pos + n]])
        pos += n
        if vals.size != n:
            raise ValueError(f"{path}: truncated section")
        return vals

    n_pts = None
    while pos < len(words):
        key = words[pos]
        if key == "POINTS":
            n_pts = int(words[pos + 1])
            pos += 3
            out["points"] = take(3 * n_pts).reshape(n_pts, 3)
        elif key == "CELLS":
            n, size = int(words[pos + 1]), int(words[pos + 2])
            pos += 3
            flat = take(size, int)
            out["cells"] = flat.reshape(n, -1)[:, 1:]
        elif key == "CELL_TYPES":
            n = int(words[pos + 1])
            pos += 2
            out["cell_types"] = take(n, int)
        elif key == "POINT_DATA":
            if int(words[pos + 1]) != n_pts:
                raise ValueError(f"{path}: POINT_DATA size mismatch")
            pos += 2
        elif key == "SCALARS":
            name = words[pos + 1]
            pos += 4
            if words[pos] == "LOOKUP_TABLE":
                pos += 2
            out["point_data"][name] = take(n_pts)
        elif key == "VECTORS":
            name = words[pos + 1]
            pos += 3
            out["point_data"][name] = take(3 * n_pts).reshape(n_pts, 3)
        else:
            raise ValueError(f"{path}: unexpected token {key!r}")
    if "cells" in out and n_pts is not None and out["cells"].size and out["cells"].max() >= n_pts:
        raise ValueError(f"{path}: cell references a missing point")
    return out
