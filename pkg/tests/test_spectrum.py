import numpy as np
import pytest

from hnmg import (assemble_poisson, build_hierarchy, error_operator, mark_all,
                  materialize_preconditioner, spectral_radius, spectrum_case,
                  spectrum_sweep, stationary_solve, SmootherSpec)
from hnmg.meshes import square_quads
from hnmg.spectrum import SpectrumError, sweep_to_csv


def test_spectral_radius_diagonal():
    est = spectral_radius(np.diag([0.5, 0.2]))
    assert est.converged
    assert abs(est.value - 0.5) <= 1e-7


def test_spectral_radius_complex_pair():
    th = 1.234
    R = 0.3 * np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    S = np.array([[2.0, 1.0], [0.4, 1.5]])
    M = S @ R @ np.linalg.inv(S)
    est = spectral_radius(M)
    assert est.converged
    assert abs(est.value - 0.3) <= 1e-5


def test_spectral_radius_zero_matrix():
    est = spectral_radius(np.zeros((4, 4)))
    assert est.value == 0.0 and est.converged


def test_one_level_preconditioner_is_inverse():
    mesh = square_quads(3)
    system = assemble_poisson(mesh.levels[0])
    h = build_hierarchy(mesh, system)
    E = error_operator(h)
    est = spectral_radius(E)
    assert est.value <= 1e-10


def test_materialization_linearity(quadrant_l3_hierarchy):
    h = quadrant_l3_hierarchy
    M = materialize_preconditioner(h)
    free = h.free_dofs()
    n = h.fine.A.shape[0]
    e = np.zeros(n)
    e[free[0]] = 1.0
    e[free[1]] = 1.0
    out = h.apply(e)[free]
    np.testing.assert_allclose(out, M[:, 0] + M[:, 1], atol=1e-12)


def test_materialization_matches_operator(rng):
    mesh = square_quads(2)
    mesh.refine(mark_all(mesh.levels[0]))
    system = assemble_poisson(mesh.levels[1])
    h = build_hierarchy(mesh, system)
    M = materialize_preconditioner(h)
    free = h.free_dofs()
    n = system.matrix.shape[0]
    for _ in range(20):
        r = np.zeros(n)
        r[free] = rng.standard_normal(len(free))
        np.testing.assert_allclose(M @ r[free], h.apply(r)[free],
                                   atol=1e-12 * max(1, np.abs(r).max()))


def test_cap_enforced(quadrant_l3_hierarchy):
    with pytest.raises(SpectrumError):
        materialize_preconditioner(quadrant_l3_hierarchy, cap=3)


def test_rho_below_one_and_consistent_with_contraction():
    # 2-level uniform bilinear mesh: stationary contraction tracks rho
    mesh = square_quads(4)
    mesh.refine(mark_all(mesh.levels[0]))
    system = assemble_poisson(mesh.levels[1])
    h = build_hierarchy(mesh, system, SmootherSpec("richardson-ilu0", omega=0.8))
    E = error_operator(h)
    rho = spectral_radius(E).value
    assert 0 < rho < 1
    _, rep = stationary_solve(h, eps=1e-14, max_it=60)
    upd = rep.update_history
    ratios = [upd[i + 1] / upd[i] for i in range(2, min(10, len(upd) - 1))]
    contraction = float(np.exp(np.mean(np.log(ratios))))
    assert abs(contraction - rho) <= 0.25 * rho


def test_spectrum_case_report_fields():
    r = spectrum_case("biquadratic", 2, seed=0, method="global", smoothing=1)
    assert r.rho < 1.0
    assert r.dofs_free > 0
    assert r.converged
    row = r.to_csv_row()
    assert row.split(",")[0] == "global"


def test_sweep_csv_schema():
    reps = spectrum_sweep(element="biquadratic", selective_passes=1, seeds=(0,),
                          methods=("global",), smoothings=(1,))
    text = sweep_to_csv(reps)
    lines = text.strip().split("\n")
    assert lines[0] == "method,level,element,nu,rho"
    assert len(lines) == 2
