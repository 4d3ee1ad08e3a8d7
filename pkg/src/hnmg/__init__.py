"""Adaptive finite elements with arbitrary-level hanging-node constraints
and a Galerkin multigrid solver."""

from .fem import (Family, QuadratureRule, SystemPair, assemble_poisson,
                  quadrature, residual, shape_eval)
from .mesh import (HANGING, INTERIOR, MASTER, HierarchicalMesh, MeshError,
                   MeshLevel, classify_nodes, mark_all, mark_circle,
                   mark_quadrant, mark_random, refine, splitmix64)
from .meshes import (bench_square, box_hexes, corner_refined_triangle_pair,
                     family_by_name, lshape_hex_edge_example, square_quads,
                     square_tris)
from .meshio import load_coarse_mesh, save_coarse_mesh, write_solution_vtk, write_vtk
from .constraints import (ConstraintOperator, constraint_operator, constraint_row,
                          direct_children, family_tree, hanging_expansion,
                          verify_continuity)
from .transfer import (constrained_prolongation, galerkin_coarsen,
                       injection_matrix, strip_nonfree, add_unit_diagonal)
from .solver import (MgHierarchy, SmootherSpec, SolveReport, build_hierarchy,
                     gmres_solve, parse_config_text, pcg_solve, smooth,
                     solution_on_nodes, stationary_solve, v_cycle)
from .spectrum import (SpectrumReport, error_operator, materialize_preconditioner,
                       spectral_radius, spectrum_case, spectrum_sweep)
from .bench import (BenchCase, BenchTable, complexity_exponent, convergence_rate,
                    run_poisson_bench, solve_case)

__version__ = "0.1.0"
