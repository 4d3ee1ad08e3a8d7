"""Solve the unit-source diffusion problem on [-1,1]^2 while refining the
first quadrant again and again, and watch the preconditioned CG iteration
count stay flat as the dof count grows by orders of magnitude.

Writes the finest solution to poisson_quadrant.vtk (point scalar u plus
the element creation levels) for a quick look in any VTK viewer.
"""

from hnmg import BenchCase, run_poisson_bench, solution_on_nodes
from hnmg.bench import solve_case
from hnmg.meshio import write_solution_vtk

case = BenchCase(strategy="quadrant", family="bilinear", levels=7, omega=0.8)
table = run_poisson_bench(case)
print(table.to_csv())

mesh, h, x, rep = solve_case(case)
u = solution_on_nodes(h, x)
write_solution_vtk("poisson_quadrant.vtk", mesh.levels[-1], u)
print(f"finest level: {mesh.levels[-1].n_elems} elements, "
      f"{rep.dofs_free} unknowns, n10 = {rep.n10}")
print("wrote poisson_quadrant.vtk")
