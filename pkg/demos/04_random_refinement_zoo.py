"""Random arbitrary-level refinements: build them, count the node classes,
check basis continuity numerically, and dump VTK files with the
classification so the hanging-node chains are visible.

The marking here draws half of all active elements each pass, so depth
jumps greater than one and even nodes that hang on one level but master
deeper ones show up; the constraint machinery handles both.
"""

import numpy as np

from hnmg import (HANGING, INTERIOR, MASTER, bench_square, box_hexes,
                  constraint_operator, mark_all, mark_random, verify_continuity)
from hnmg.meshio import write_vtk

for family, seed in [("bilinear", 11), ("quadratic-tri", 5)]:
    mesh = bench_square(family)
    mesh.refine(mark_all(mesh.levels[0]))
    for p in range(4):
        mesh.refine(mark_random(mesh.levels[-1], 0.5, seed + 31 * p))
    lev = mesh.levels[-1]
    R = constraint_operator(lev)
    jump = verify_continuity(lev, R, 5)
    counts = np.bincount(lev.klass, minlength=3)
    print(f"{family} seed {seed}: {lev.n_elems} elements, "
          f"I/M/H = {counts[INTERIOR]}/{counts[MASTER]}/{counts[HANGING]}, "
          f"max continuity jump = {jump:.2e}")
    name = f"random_{family}.vtk"
    write_vtk(name, lev,
              point_scalars={"classification": lev.klass.astype(np.int32)},
              cell_scalars={"created": lev.created.astype(np.int32)})
    print(f"  wrote {name}")

mesh = box_hexes(2)
for p in range(2):
    mesh.refine(mark_random(mesh.levels[-1], 0.5, 3 + 31 * p))
lev = mesh.levels[-1]
jump = verify_continuity(lev, constraint_operator(lev), 4)
print(f"trilinear hexes: {lev.n_elems} elements, max jump = {jump:.2e}")
write_vtk("random_hex.vtk", lev,
          point_scalars={"classification": lev.klass.astype(np.int32)},
          cell_scalars={"created": lev.created.astype(np.int32)})
print("  wrote random_hex.vtk")
