"""Built-in coarse meshes and the small reference configurations used by the
tests and demos."""

from __future__ import annotations

import numpy as np

from .fem import Family
from .mesh import HierarchicalMesh, mark_all

FAMILY_NAMES = {
    "bilinear": Family("quad", 1),
    "biquadratic": Family("quad", 2),
    "linear-tri": Family("tri", 1),
    "quadratic-tri": Family("tri", 2),
    "trilinear-hex": Family("hex", 1),
    "triquadratic-hex": Family("hex", 2),
}


def family_by_name(name: str) -> Family:
    try:
        return FAMILY_NAMES[name]
    except KeyError:
        raise ValueError(f"unknown family {name!r}; pick one of {sorted(FAMILY_NAMES)}")


def _grid_nodes(nx, ny, lo, hi):
    xs = np.linspace(lo[0], hi[0], nx + 1)
    ys = np.linspace(lo[1], hi[1], ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    return np.stack([X.ravel(), Y.ravel()], axis=1)


def square_quads(nx, ny=None, lo=(0.0, 0.0), hi=(1.0, 1.0), degree=1) -> HierarchicalMesh:
    """nx-by-ny grid of quadrilaterals on the rectangle [lo, hi]."""
    ny = nx if ny is None else ny
    fam = Family("quad", degree)
    if degree == 1:
        coords = _grid_nodes(nx, ny, lo, hi)
        nid = lambda i, j: j * (nx + 1) + i
        conn = [[nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)]
                for j in range(ny) for i in range(nx)]
        return HierarchicalMesh(coords, np.array(conn), fam)
    coords = _grid_nodes(2 * nx, 2 * ny, lo, hi)
    nid = lambda i, j: j * (2 * nx + 1) + i
    conn = []
    for j in range(ny):
        for i in range(nx):
            a, b = 2 * i, 2 * j
            conn.append([nid(a, b), nid(a + 2, b), nid(a + 2, b + 2), nid(a, b + 2),
                         nid(a + 1, b), nid(a + 2, b + 1), nid(a + 1, b + 2), nid(a, b + 1),
                         nid(a + 1, b + 1)])
    return HierarchicalMesh(coords, np.array(conn), fam)


def square_tris(nx, ny=None, lo=(0.0, 0.0), hi=(1.0, 1.0), degree=1) -> HierarchicalMesh:
    """Each grid cell split along its lower-left / upper-right diagonal."""
    ny = nx if ny is None else ny
    fam = Family("tri", degree)
    corners = _grid_nodes(nx, ny, lo, hi)
    nid = lambda i, j: j * (nx + 1) + i
    tris = []
    for j in range(ny):
        for i in range(nx):
            tris.append([nid(i, j), nid(i + 1, j), nid(i + 1, j + 1)])
            tris.append([nid(i, j), nid(i + 1, j + 1), nid(i, j + 1)])
    tris = np.array(tris)
    if degree == 1:
        return HierarchicalMesh(corners, tris, fam)
    # append unique edge midpoints for the 6-node triangles
    coords = [c for c in corners]
    seen = {}
    conn = []
    for t in tris:
        row = list(t)
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            key = (min(a, b), max(a, b))
            if key not in seen:
                seen[key] = len(coords)
                coords.append((corners[key[0]] + corners[key[1]]) / 2.0)
            row.append(seen[key])
        conn.append(row)
    return HierarchicalMesh(np.array(coords), np.array(conn), fam)


def box_hexes(nx, ny=None, nz=None, lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0),
              degree=1) -> HierarchicalMesh:
    ny = nx if ny is None else ny
    nz = nx if nz is None else nz
    fam = Family("hex", degree)
    s = degree
    xs = np.linspace(lo[0], hi[0], s * nx + 1)
    ys = np.linspace(lo[1], hi[1], s * ny + 1)
    zs = np.linspace(lo[2], hi[2], s * nz + 1)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    coords = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    nid = lambda i, j, k: (i * (s * ny + 1) + j) * (s * nz + 1) + k

    conn = []
    ref = fam.ref_nodes()
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                row = []
                for r in ref:
                    ii = s * i + int(round((r[0] + 1) / 2 * s))
                    jj = s * j + int(round((r[1] + 1) / 2 * s))
                    kk = s * k + int(round((r[2] + 1) / 2 * s))
                    row.append(nid(ii, jj, kk))
                conn.append(row)
    return HierarchicalMesh(coords, np.array(conn), fam)


def bench_square(family_name: str) -> HierarchicalMesh:
    """The 2x2 coarse grid on [-1, 1]^2 used by the diffusion benchmarks."""
    fam = family_by_name(family_name)
    if fam.shape == "quad":
        return square_quads(2, 2, lo=(-1, -1), hi=(1, 1), degree=fam.degree)
    if fam.shape == "tri":
        return square_tris(2, 2, lo=(-1, -1), hi=(1, 1), degree=fam.degree)
    raise ValueError("benchmark domain is two-dimensional")


def corner_refined_triangle_pair() -> tuple:
    """Four linear triangles around a center node; the south triangle is
    refined twice so the center node constrains five hanging nodes through a
    two-generation family tree.

    Returns (mesh, ids) where ids holds x1..x6: x1 the master at the center,
    x2/x3 the mid-edge hanging nodes, x4 the hanging node shared by both
    branches, x5/x6 the remaining second-generation hanging nodes.
    """
    coords = np.array([
        [1.0, 1.0],   # center, x1
        [0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0],
    ])
    conn = np.array([
        [1, 2, 0],   # south
        [2, 3, 0],   # east
        [3, 4, 0],   # north
        [4, 1, 0],   # west
    ])
    mesh = HierarchicalMesh(coords, conn, Family("tri", 1))
    mesh.refine([0])
    # central child of the refined south triangle: corners are the three
    # midpoints (0.5,0.5), (1,0), (1.5,0.5) -> centroid (1, 1/3)
    lev = mesh.levels[-1]
    cent = lev.centroids()
    target = np.array([1.0, 1.0 / 3.0])
    elem = int(np.argmin(np.linalg.norm(cent - target, axis=1)))
    mesh.refine([elem])
    ids = {
        "x1": mesh.find_node([1.0, 1.0]),
        "x2": mesh.find_node([0.5, 0.5]),
        "x3": mesh.find_node([1.5, 0.5]),
        "x4": mesh.find_node([1.0, 0.5]),
        "x5": mesh.find_node([0.75, 0.25]),
        "x6": mesh.find_node([1.25, 0.25]),
    }
    return mesh, ids


def lshape_hex_edge_example() -> tuple:
    """Three unit cubes in an L; the cube B is refined once, then its two
    children along the re-entrant edge are refined again.  The nodes on that
    edge reproduce the quarter/half/three-quarter hanging pattern with
    weights 0.5 / 0.75 / 0.25 relative to the corner master.

    Returns (mesh, ids) with x1 the master at (1,1,0), x2 = (1,1,0.5),
    x3 = (1,1,0.25), x4 = (1,1,0.75).
    """
    fam = Family("hex", 1)
    cubes = [((0, 0, 0), (1, 1, 1)),    # A
             ((1, 0, 0), (2, 1, 1)),    # B
             ((0, 1, 0), (1, 2, 1))]    # C
    coords, conn, seen = [], [], {}
    for lo, hi in cubes:
        row = []
        for r in Family("hex", 1).ref_nodes():
            p = (lo[0] if r[0] < 0 else hi[0],
                 lo[1] if r[1] < 0 else hi[1],
                 lo[2] if r[2] < 0 else hi[2])
            if p not in seen:
                seen[p] = len(coords)
                coords.append(p)
            row.append(seen[p])
        conn.append(row)
    mesh = HierarchicalMesh(np.array(coords, dtype=float), np.array(conn), fam)
    lev = mesh.levels[0]
    b = int(np.argmin(np.linalg.norm(lev.centroids() - np.array([1.5, 0.5, 0.5]), axis=1)))
    mesh.refine([b])
    lev = mesh.levels[-1]
    cent = lev.centroids()
    targets = [np.array([1.25, 0.75, 0.25]), np.array([1.25, 0.75, 0.75])]
    picks = [int(np.argmin(np.linalg.norm(cent - t, axis=1))) for t in targets]
    mesh.refine(picks)
    ids = {
        "x1": mesh.find_node([1.0, 1.0, 0.0]),
        "x2": mesh.find_node([1.0, 1.0, 0.5]),
        "x3": mesh.find_node([1.0, 1.0, 0.25]),
        "x4": mesh.find_node([1.0, 1.0, 0.75]),
    }
    return mesh, ids


def refined_uniformly(mesh: HierarchicalMesh, times: int) -> HierarchicalMesh:
    for _ in range(times):
        mesh.refine(mark_all(mesh.levels[-1]))
    return mesh
