import numpy as np
import pytest

from hnmg import (assemble_poisson, bench_square, build_hierarchy, mark_all,
                  mark_quadrant, SmootherSpec)


@pytest.fixture(scope="session")
def quadrant_l3():
    """Quadrant-refined bilinear hierarchy with 4 mesh levels."""
    mesh = bench_square("bilinear")
    mesh.refine(mark_all(mesh.levels[0]))
    for _ in range(2):
        mesh.refine(mark_quadrant(mesh.levels[-1]))
    return mesh


@pytest.fixture(scope="session")
def quadrant_l3_hierarchy(quadrant_l3):
    system = assemble_poisson(quadrant_l3.levels[-1])
    h = build_hierarchy(quadrant_l3, system,
                        SmootherSpec("richardson-ilu0", omega=0.8))
    return h


@pytest.fixture(scope="session")
def uniform_two_level():
    mesh = bench_square("bilinear")
    mesh.refine(mark_all(mesh.levels[0]))
    return mesh


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
