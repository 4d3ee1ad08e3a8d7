"""Mesh file reader and VTK legacy writers.

Mesh text format (line oriented, '#' comments allowed):

    dim <d>
    nodes <N>
    <N lines of d reals>
    elements <E> <shape> <degree>
    <E lines of node indices, 0-based, VTK vertex ordering>

VTK output is legacy ASCII unstructured-grid with optional point scalars
(node classification) and cell scalars (element creation level).
"""

from __future__ import annotations

import numpy as np

from .fem import Family
from .mesh import HierarchicalMesh, MeshError

VTK_CELL_TYPE = {
    ("quad", 1): 9, ("quad", 2): 28,
    ("tri", 1): 5, ("tri", 2): 22,
    ("hex", 1): 12, ("hex", 2): 29,
}


def load_coarse_mesh(path) -> HierarchicalMesh:
    """Read the text format above and return a one-level hierarchy."""
    with open(path) as fh:
        tokens = []
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                tokens.append(line.split())
    it = iter(tokens)

    def expect(keyword, count):
        try:
            row = next(it)
        except StopIteration:
            raise MeshError(f"unexpected end of mesh file, expected {keyword!r}")
        if row[0] != keyword or len(row) != count + 1:
            raise MeshError(f"malformed {keyword!r} header: {' '.join(row)}")
        return row[1:]

    (d,) = expect("dim", 1)
    d = int(d)
    if d not in (2, 3):
        raise MeshError("dim must be 2 or 3")
    (n,) = expect("nodes", 1)
    n = int(n)
    coords = np.empty((n, d))
    for i in range(n):
        row = next(it, None)
        if row is None or len(row) != d:
            raise MeshError(f"bad node line {i}")
        coords[i] = [float(v) for v in row]
    e, shape, degree = expect("elements", 3)
    e, degree = int(e), int(degree)
    try:
        fam = Family(shape, degree)
    except Exception as exc:
        raise MeshError(str(exc))
    if (fam.dim) != d:
        raise MeshError(f"element shape {shape!r} does not match dim {d}")
    conn = np.empty((e, fam.n_nodes), dtype=int)
    for i in range(e):
        row = next(it, None)
        if row is None or len(row) != fam.n_nodes:
            raise MeshError(f"bad element line {i}")
        conn[i] = [int(v) for v in row]
    if next(it, None) is not None:
        raise MeshError("trailing content in mesh file")
    return HierarchicalMesh(coords, conn, fam)


def save_coarse_mesh(path, mesh: HierarchicalMesh, level: int = 0):
    lev = mesh.levels[level]
    fam = lev.family
    with open(path, "w") as fh:
        fh.write(f"dim {fam.dim}\n")
        fh.write(f"nodes {lev.n_nodes}\n")
        for p in lev.coords:
            fh.write(" ".join(f"{v:.17g}" for v in p) + "\n")
        fh.write(f"elements {lev.n_elems} {fam.shape} {fam.degree}\n")
        for row in lev.conn:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")


def write_vtk(path, level, point_scalars=None, cell_scalars=None,
              title="hnmg mesh"):
    """Legacy ASCII unstructured grid.  point_scalars / cell_scalars map
    name -> array; integer arrays are written as int, others as double."""
    fam = level.family
    ctype = VTK_CELL_TYPE[(fam.shape, fam.degree)]
    coords = level.coords
    conn = level.conn
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title + "\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(coords)} double\n")
        for p in coords:
            xyz = list(p) + [0.0] * (3 - len(p))
            fh.write(" ".join(f"{v:.17g}" for v in xyz) + "\n")
        nn = conn.shape[1]
        fh.write(f"CELLS {len(conn)} {len(conn) * (nn + 1)}\n")
        for row in conn:
            fh.write(str(nn) + " " + " ".join(str(int(v)) for v in row) + "\n")
        fh.write(f"CELL_TYPES {len(conn)}\n")
        for _ in range(len(conn)):
            fh.write(f"{ctype}\n")
        if point_scalars:
            fh.write(f"POINT_DATA {len(coords)}\n")
            for name, arr in point_scalars.items():
                arr = np.asarray(arr)
                kind = "int" if np.issubdtype(arr.dtype, np.integer) else "double"
                fh.write(f"SCALARS {name} {kind} 1\nLOOKUP_TABLE default\n")
                for v in arr:
                    fh.write(f"{int(v)}\n" if kind == "int" else f"{float(v):.17g}\n")
        if cell_scalars:
            fh.write(f"CELL_DATA {len(conn)}\n")
            for name, arr in cell_scalars.items():
                arr = np.asarray(arr)
                kind = "int" if np.issubdtype(arr.dtype, np.integer) else "double"
                fh.write(f"SCALARS {name} {kind} 1\nLOOKUP_TABLE default\n")
                for v in arr:
                    fh.write(f"{int(v)}\n" if kind == "int" else f"{float(v):.17g}\n")


def write_solution_vtk(path, level, u, name="u"):
    write_vtk(path, level,
              point_scalars={name: np.asarray(u, dtype=float),
                             "classification": level.klass.astype(np.int32)},
              cell_scalars={"created": level.created.astype(np.int32),
                            "depth": level.depth.astype(np.int32)})
