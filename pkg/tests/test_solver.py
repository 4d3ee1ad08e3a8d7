import numpy as np
import pytest
import scipy.sparse as sp

from hnmg import (assemble_poisson, build_hierarchy, gmres_solve, mark_all,
                  pcg_solve, smooth, solution_on_nodes, stationary_solve,
                  SmootherSpec)
from hnmg.solver import SolverError, parse_config_text
from hnmg.meshes import bench_square, square_quads


def test_vcycle_zero_residual(quadrant_l3_hierarchy):
    h = quadrant_l3_hierarchy
    r = np.zeros(h.fine.A.shape[0])
    assert np.array_equal(h.apply(r), r)


def test_one_level_hierarchy_is_direct_solve(rng):
    mesh = square_quads(3)
    system = assemble_poisson(mesh.levels[0])
    h = build_hierarchy(mesh, system)
    r = rng.standard_normal(system.matrix.shape[0])
    r[h.fine.nonfree] = 0.0
    w = h.apply(r)
    free = h.free_dofs()
    A = system.matrix[free][:, free].toarray()
    np.testing.assert_allclose(w[free], np.linalg.solve(A, r[free]),
                               atol=1e-11 * max(1, np.abs(r).max()))


def test_vcycle_linearity(quadrant_l3_hierarchy, rng):
    h = quadrant_l3_hierarchy
    r = rng.standard_normal(h.fine.A.shape[0])
    r[h.fine.nonfree] = 0.0
    w1 = h.apply(r)
    w2 = h.apply(1.75 * r)
    assert np.abs(1.75 * w1 - w2).max() <= 1e-12 * np.abs(w2).max()


def test_vcycle_outputs_vanish_on_constrained(quadrant_l3_hierarchy, rng):
    h = quadrant_l3_hierarchy
    r = rng.standard_normal(h.fine.A.shape[0])
    r[h.fine.nonfree] = 0.0
    w = h.apply(r)
    assert np.abs(w[h.fine.nonfree]).max() == 0.0


def test_vcycle_symmetry(quadrant_l3_hierarchy, rng):
    h = quadrant_l3_hierarchy
    n = h.fine.A.shape[0]
    for _ in range(3):
        v = rng.standard_normal(n)
        w = rng.standard_normal(n)
        v[h.fine.nonfree] = 0.0
        w[h.fine.nonfree] = 0.0
        a = v @ h.apply(w)
        b = w @ h.apply(v)
        assert abs(a - b) <= 1e-10 * max(abs(a), abs(b), 1e-30)


def test_vcycle_matrix_matches_operator(rng):
    mesh = square_quads(2)
    mesh.refine(mark_all(mesh.levels[0]))
    system = assemble_poisson(mesh.levels[1])
    h = build_hierarchy(mesh, system)
    n = system.matrix.shape[0]
    cols = np.zeros((n, n))
    eye = np.eye(n)
    for i in np.nonzero(h.fine.free)[0]:
        cols[:, i] = h.apply(eye[:, i])
    for _ in range(5):
        r = rng.standard_normal(n)
        r[h.fine.nonfree] = 0.0
        assert np.abs(cols @ r - h.apply(r)).max() <= 1e-12 * max(1, np.abs(r).max())


def test_smoother_fixed_point(quadrant_l3_hierarchy, rng):
    h = quadrant_l3_hierarchy
    lev = h.fine
    k = h.n_levels - 1
    x = rng.standard_normal(lev.A.shape[0])
    x[lev.nonfree] = 0.0
    b = lev.A @ x
    out = smooth(h, k, x.copy(), b)
    assert np.abs(out - x).max() <= 1e-12 * np.abs(x).max()


def test_smoother_zero_omega(quadrant_l3, rng):
    system = assemble_poisson(quadrant_l3.levels[-1])
    h = build_hierarchy(quadrant_l3, system, SmootherSpec("richardson-ilu0", omega=0.0))
    x = rng.standard_normal(system.matrix.shape[0])
    x[h.fine.nonfree] = 0.0
    b = rng.standard_normal(len(x))
    out = smooth(h, h.n_levels - 1, x.copy(), b)
    assert np.array_equal(out, x)


def test_jacobi_single_dof_exact():
    mesh = square_quads(2)
    system = assemble_poisson(mesh.levels[0])
    h = build_hierarchy(mesh, system, SmootherSpec("richardson-jacobi", omega=1.0))
    free = h.free_dofs()
    assert len(free) == 1
    b = np.zeros(system.matrix.shape[0])
    b[free] = 3.0
    out = smooth(h, 0, np.zeros_like(b), b)
    np.testing.assert_allclose(out[free], 3.0 / system.matrix[free[0], free[0]],
                               atol=1e-14)


@pytest.mark.parametrize("kind", ["richardson-ilu0", "richardson-jacobi",
                                  "sym-gauss-seidel"])
def test_all_smoothers_converge(kind, quadrant_l3):
    system = assemble_poisson(quadrant_l3.levels[-1])
    omega = 0.8 if kind != "richardson-jacobi" else 0.6
    h = build_hierarchy(quadrant_l3, system, SmootherSpec(kind, omega=omega))
    x, rep = pcg_solve(h, rtol=1e-10, max_it=100)
    assert rep.converged


def test_stationary_zero_rhs(quadrant_l3_hierarchy):
    h = quadrant_l3_hierarchy
    uhat, rep = stationary_solve(h, f=np.zeros(h.fine.A.shape[0]), eps=1e-12)
    assert rep.iterations == 1 and rep.converged
    assert np.abs(uhat).max() == 0.0


def test_stationary_converges(quadrant_l3_hierarchy):
    h = quadrant_l3_hierarchy
    uhat, rep = stationary_solve(h, eps=1e-11)
    assert rep.converged
    x, rep2 = pcg_solve(h, rtol=1e-12)
    assert np.abs(uhat - x).max() <= 1e-8 * np.abs(x).max()


def test_solution_continuity_constraint(quadrant_l3_hierarchy):
    h = quadrant_l3_hierarchy
    uhat, _ = stationary_solve(h, eps=1e-12)
    u = solution_on_nodes(h, uhat)
    lev = h.mesh.levels[-1]
    R = h.fine.R
    # hanging values equal their master combination
    hang = lev.hang.ids
    Phi_T_u = (R.T @ uhat)[hang]
    np.testing.assert_allclose(u[hang], Phi_T_u, atol=1e-12)
    # and the constrained residual is tiny
    r = h.fine_system.rhs - h.fine_system.matrix @ u
    rhat = R @ r
    rhat[h.fine.nonfree] = 0.0
    assert np.abs(rhat).max() <= 1e-9 * np.abs(h.fine_system.rhs).max()


def test_pcg_converges_within_dof_count():
    mesh = square_quads(3)
    system = assemble_poisson(mesh.levels[0])
    h = build_hierarchy(mesh, system)
    x, rep = pcg_solve(h, rtol=1e-12)
    assert rep.converged
    assert rep.iterations <= int(h.fine.free.sum())


def test_gmres_matches_pcg(quadrant_l3_hierarchy):
    h = quadrant_l3_hierarchy
    xg, repg = gmres_solve(h, rtol=1e-11)
    xc, repc = pcg_solve(h, rtol=1e-11)
    assert repg.converged and repc.converged
    assert np.abs(xg - xc).max() <= 1e-7 * np.abs(xc).max()


def test_mesh_independent_pcg_iterations():
    counts = []
    for L in range(2, 6):
        mesh = bench_square("bilinear")
        for _ in range(L):
            mesh.refine(mark_all(mesh.levels[-1]))
        system = assemble_poisson(mesh.levels[-1])
        h = build_hierarchy(mesh, system)
        _, rep = pcg_solve(h, rtol=1e-10)
        assert rep.converged
        counts.append(rep.n10 if rep.n10 is not None else rep.iterations)
    assert max(counts) - min(counts) <= 2


def test_report_roundtrip(quadrant_l3_hierarchy):
    import json
    _, rep = pcg_solve(quadrant_l3_hierarchy, rtol=1e-10)
    d = json.loads(rep.to_json(extra_field=1))
    assert d["method"] == "pcg-mg"
    assert d["extra_field"] == 1
    # rbar recomputable from the recorded history
    hist = d["preconditioned_history"]
    n = len(hist) - 1
    np.testing.assert_allclose(d["rbar"], np.log10(hist[0] / hist[-1]) / n, rtol=1e-12)
    row = rep.to_csv_row()
    assert row.startswith("pcg-mg,1,")


def test_parse_config():
    text = """
    # comment
    strategy = circle
    levels = 5
    omega = 0.7
    seed = 9
    """
    cfg = parse_config_text(text)
    assert cfg == {"strategy": "circle", "levels": 5, "omega": 0.7, "seed": 9}
    with pytest.raises(SolverError):
        parse_config_text("unknown_key = 3")
    with pytest.raises(SolverError):
        parse_config_text("omega == 3")


def test_bad_smoother_rejected():
    with pytest.raises(SolverError):
        SmootherSpec("not-a-smoother")


def test_hierarchy_unit_hanging_diagonals(quadrant_l3_hierarchy):
    h = quadrant_l3_hierarchy
    for k, lev in enumerate(h.mesh.levels):
        A = h.levels[k].A
        nf = h.levels[k].nonfree
        d = A.diagonal()
        assert np.abs(d[nf] - 1.0).max() == 0.0
        # non-free rows and columns carry nothing else
        sub = A[nf][:, ~nf]
        assert sub.nnz == 0


def test_three_level_uniform_coarse_matches_direct():
    mesh = square_quads(4)
    mesh.refine(mark_all(mesh.levels[0]))
    mesh.refine(mark_all(mesh.levels[1]))
    system = assemble_poisson(mesh.levels[2])
    h = build_hierarchy(mesh, system)
    direct = assemble_poisson(mesh.levels[0]).matrix
    diff = abs(h.levels[0].A - direct).max()
    assert diff <= 1e-10 * abs(direct).max()


def test_ilu_zero_pivot_falls_back_to_diagonal(caplog):
    import logging
    from hnmg.solver import LevelSmoother

    A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with caplog.at_level(logging.WARNING):
        sm = LevelSmoother(A, np.array([True, True]),
                           SmootherSpec("richardson-ilu0", omega=0.5))
    assert sm.fallback_diag
    assert any("zero pivot" in r.message for r in caplog.records)
    out = sm.apply(np.zeros(2), np.array([2.0, 2.0]))
    np.testing.assert_allclose(out, [1.0, 1.0])
