"""Walk through the constraint construction on the two reference meshes.

The first mesh is four linear triangles around a center node whose south
triangle is refined twice: the center's basis must absorb five hanging
nodes, two of them through second-generation family-tree paths whose
coefficients multiply along the way (0.5 * 0.5) and sum across branches.

The second mesh is an L of three cubes where the refinement pattern hangs
three nodes on the re-entrant edge; the quarter/half/three-quarter split
yields the 0.75 / 0.5 / 0.25 weights directly from the coarse edge trace.
"""

import numpy as np

from hnmg import (constraint_operator, constraint_row, direct_children,
                  family_tree)
from hnmg.meshes import corner_refined_triangle_pair, lshape_hex_edge_example


def show(title, mesh, ids, names):
    lev = mesh.levels[-1]
    print(f"\n=== {title}")
    print(f"levels: {mesh.n_levels}, elements: {lev.n_elems}, nodes: {lev.n_nodes}")
    label = {v: k for k, v in ids.items()}
    x1 = ids["x1"]
    print(f"direct children of {label[x1]}:")
    for c, w in direct_children(lev, x1):
        print(f"  {label.get(c, c)}  weight {w}")
    tree = family_tree(lev)
    for k in names:
        node = ids[k]
        if node in tree:
            kids = ", ".join(f"{label.get(c, c)}:{w}" for c, w in tree[node])
            print(f"children of {k}: {kids}")
    row = constraint_row(lev, x1)
    print("constraint row of x1 (path sums):")
    for c, w in sorted(row.items()):
        print(f"  {label.get(c, c)}  {w}")


mesh2d, ids2d = corner_refined_triangle_pair()
show("two-generation triangle refinement", mesh2d, ids2d,
     ["x1", "x2", "x3"])

mesh3d, ids3d = lshape_hex_edge_example()
show("re-entrant hex edge", mesh3d, ids3d, ["x1", "x2"])

lev = mesh2d.levels[-1]
R = constraint_operator(lev)
order = [ids2d[k] for k in ("x1", "x2", "x3", "x4", "x5", "x6")]
print("\n6x6 excerpt of the constraint matrix (x1..x6):")
print(np.array_str(R.matrix[np.ix_(order, order)].toarray(), precision=3))
print("\nmaster -> hanging couplings:")
print(R.format_rows())
