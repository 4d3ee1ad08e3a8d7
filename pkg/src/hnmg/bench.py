"""Diffusion benchmark drivers on [-1,1]^2 with f == 1.

The coarse grid has four elements and is refined uniformly once; after that
a strategy picks elements per pass: the first quadrant (centroid x, y >= 0)
or a disc whose radius pi/(4k) shrinks with the pass number k.  Each case
is solved with V-cycle-preconditioned CG and reported as a table row with
the iteration count to a 1e10 residual reduction, the average decimal
reduction rate, and wall time; consecutive rows also get the observed
complexity exponent ln(T_J/T_{J-1}) / ln(N_J/N_{J-1}).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .fem import assemble_poisson
from .mesh import mark_all, mark_circle, mark_quadrant, mark_random
from .meshes import bench_square
from .solver import SmootherSpec, build_hierarchy, pcg_solve

STRATEGIES = ("quadrant", "circle", "uniform", "random")


class BenchError(Exception):
    pass


@dataclass
class BenchCase:
    strategy: str = "quadrant"
    family: str = "bilinear"
    levels: int = 3                      # total refinements incl. the uniform one
    smoother: str = "richardson-ilu0"
    omega: float = 0.8
    nu_pre: int = 1
    nu_post: int = 1
    rtol: float = 1e-10
    seed: int = 0
    fraction: float = 0.5
    max_it: int = 200

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise BenchError(f"unknown strategy {self.strategy!r}")
        if self.levels < 1 or self.levels > 12:
            raise BenchError("levels must be between 1 and 12")


@dataclass
class BenchRow:
    L: int
    dofs: int
    dofs_total: int
    n10: int | None
    rbar: float | None
    wall_time_s: float
    exponent: float | None
    converged: bool
    flag: str = ""


@dataclass
class BenchTable:
    case: dict
    rows: list = field(default_factory=list)

    CSV_HEADER = "strategy,family,L,dofs,n10,rbar,wall_time_s,exponent"

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for r in self.rows:
            n10 = "" if r.n10 is None else r.n10
            rbar = "" if r.rbar is None else f"{r.rbar:.4f}"
            exp = "" if r.exponent is None else f"{r.exponent:.4f}"
            lines.append(f"{self.case['strategy']},{self.case['family']},{r.L},"
                         f"{r.dofs},{n10},{rbar},{r.wall_time_s:.4f},{exp}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({"case": self.case, "rows": [asdict(r) for r in self.rows]},
                          indent=2)

    @property
    def all_converged(self):
        return all(r.converged for r in self.rows)


def build_case_mesh(case: BenchCase):
    """Coarse 2x2 grid, one uniform refinement, then L-1 strategy passes."""
    mesh = bench_square(case.family)
    mesh.refine(mark_all(mesh.levels[0]))
    for p in range(1, case.levels):
        lev = mesh.levels[-1]
        if case.strategy == "quadrant":
            marked = mark_quadrant(lev)
        elif case.strategy == "circle":
            marked = mark_circle(lev, p)
        elif case.strategy == "uniform":
            marked = mark_all(lev)
        else:
            marked = mark_random(lev, case.fraction, case.seed + 101 * p)
        mesh.refine(marked)
    return mesh


def solve_case(case: BenchCase, mesh=None):
    """Assemble, build the hierarchy, and run preconditioned CG once."""
    mesh = mesh or build_case_mesh(case)
    lev = mesh.levels[-1]
    system = assemble_poisson(lev)
    spec = SmootherSpec(case.smoother, omega=case.omega,
                        nu_pre=case.nu_pre, nu_post=case.nu_post)
    t0 = time.perf_counter()
    h = build_hierarchy(mesh, system, spec)
    x, rep = pcg_solve(h, rtol=case.rtol, max_it=case.max_it)
    rep.wall_time_s = time.perf_counter() - t0
    return mesh, h, x, rep


def run_poisson_bench(case: BenchCase, levels_range=None) -> BenchTable:
    """Rows for L in levels_range (default 3..case.levels)."""
    levels_range = levels_range or range(3, case.levels + 1)
    table = BenchTable(case=asdict(case))
    prev = None
    for L in levels_range:
        sub = BenchCase(**{**asdict(case), "levels": L})
        _, _, _, rep = solve_case(sub)
        flag = rep.flag
        if rep.iterations == 0 and rep.converged:
            flag = (flag + ";" if flag else "") + "zero-iterations"
        row = BenchRow(L=L, dofs=rep.dofs_free, dofs_total=rep.dofs_total,
                       n10=rep.n10, rbar=rep.rbar, wall_time_s=rep.wall_time_s,
                       exponent=None, converged=rep.converged, flag=flag)
        if prev is not None:
            row.exponent = complexity_exponent(
                (prev.wall_time_s, row.wall_time_s), (prev.dofs, row.dofs))
        table.rows.append(row)
        prev = row
    return table


def convergence_rate(history) -> float:
    """Average decimal reduction per step: log10(|r0| / |rn|) / n."""
    history = list(history)
    if len(history) < 2:
        raise BenchError("need at least two residuals")
    r0, rn = history[0], history[-1]
    n = len(history) - 1
    if rn == 0:
        return float("inf")
    if r0 <= 0 or rn < 0:
        raise BenchError("residual norms must be nonnegative with r0 > 0")
    return float(np.log10(r0 / rn) / n)


def complexity_exponent(timings, dofs) -> float:
    """n in T_J = C N_J^n from two consecutive rows."""
    (t0, t1), (n0, n1) = timings, dofs
    if min(t0, t1) <= 0 or min(n0, n1) <= 0:
        raise BenchError("timings and dof counts must be positive")
    if n0 == n1:
        raise BenchError("dof counts must differ")
    return float(np.log(t1 / t0) / np.log(n1 / n0))
