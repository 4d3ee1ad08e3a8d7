import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hnmg.fem import (Family, FemError, assemble_poisson, eliminate_dirichlet,
                      inverse_map, map_points, quadrature, residual, shape_eval)
from hnmg.meshes import square_quads

ALL_FAMILIES = [Family(s, d) for s in ("quad", "tri", "hex") for d in (1, 2)]


@pytest.mark.parametrize("fam", ALL_FAMILIES, ids=str)
def test_delta_property(fam):
    vals, _ = shape_eval(fam, fam.ref_nodes())
    assert np.allclose(vals, np.eye(fam.n_nodes), atol=1e-14)


@pytest.mark.parametrize("fam", ALL_FAMILIES, ids=str)
def test_partition_of_unity_and_gradients(fam, rng):
    if fam.shape == "tri":
        pts = rng.random((50, 2)) * 0.45
    else:
        pts = rng.random((50, fam.dim)) * 2 - 1
    vals, grads = shape_eval(fam, pts)
    assert np.abs(vals.sum(axis=1) - 1.0).max() <= 1e-13
    assert np.abs(grads.sum(axis=1)).max() <= 1e-12


def test_quadratic_edge_trace():
    # 1D quadratic Lagrange on nodes -1, 0, 1 evaluated at -0.5
    fam = Family("quad", 2)
    vals, _ = shape_eval(fam, np.array([[-0.5, -1.0]]))
    np.testing.assert_allclose(vals[0][[0, 4, 1]], [0.375, 0.75, -0.125], atol=1e-15)


def test_point_outside_raises():
    with pytest.raises(FemError):
        shape_eval(Family("quad", 1), np.array([[1.5, 0.0]]))
    with pytest.raises(FemError):
        shape_eval(Family("tri", 1), np.array([[0.7, 0.7]]))


@pytest.mark.parametrize("fam", ALL_FAMILIES, ids=str)
def test_quadrature_measure_and_exactness(fam):
    rule = quadrature(fam)
    measure = {"quad": 4.0, "tri": 0.5, "hex": 8.0}[fam.shape]
    assert abs(rule.weights.sum() - measure) <= 1e-13 * measure
    # exact integration of polynomials up to the rule's design order
    order = 2 * fam.degree if fam.shape == "tri" else 2 * (fam.degree + 1) - 1
    if fam.shape == "tri":
        for a in range(order + 1):
            for b in range(order + 1 - a):
                got = (rule.points[:, 0] ** a * rule.points[:, 1] ** b) @ rule.weights
                # int over ref triangle of x^a y^b = a! b! / (a+b+2)!
                from math import factorial
                want = factorial(a) * factorial(b) / factorial(a + b + 2)
                assert abs(got - want) <= 1e-13
    else:
        for a in range(0, order + 1, 2):
            got = (rule.points[:, 0] ** a) @ rule.weights
            want = measure * (1.0 / (a + 1))
            assert abs(got - want) <= 1e-12 * measure


def test_q2_stiffness_insensitive_to_extra_quadrature():
    mesh = square_quads(2, degree=2)
    lev = mesh.levels[0]
    from hnmg.fem import _element_batches
    A1 = assemble_poisson(lev).matrix
    # same assembly with a 4x4 tensor rule
    import hnmg.fem as fem

    rule4 = quadrature(lev.family, npts_1d=4)
    ec, vals, gphys, detJ = _element_batches(lev.coords, lev.conn, lev.family, rule4)
    wdet = detJ * rule4.weights[None, :]
    K = np.einsum("eqnd,eqmd,eq->enm", gphys, gphys, wdet)
    import scipy.sparse as sp

    conn = lev.conn
    rows = np.repeat(conn, conn.shape[1], axis=1).ravel()
    cols = np.tile(conn, (1, conn.shape[1])).ravel()
    A2 = sp.coo_matrix((K.ravel(), (rows, cols)), shape=A1.shape).tocsr()
    A2 = eliminate_dirichlet(A2, lev.dirichlet)
    assert abs(A1 - A2).max() <= 1e-13 * abs(A1).max()


def test_unit_quad_stiffness_entries():
    # hand-integrated bilinear stiffness on the unit square
    fam = Family("quad", 1)
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    rule = quadrature(fam)
    vals, grads = shape_eval(fam, rule.points)
    J = np.einsum("qng,nd->qdg", grads, coords)
    detJ = np.linalg.det(J)
    invJ = np.linalg.inv(J)
    g = np.einsum("qng,qgd->qnd", grads, invJ)
    K = np.einsum("qnd,qmd,q->nm", g, g, detJ * rule.weights)
    np.testing.assert_allclose(np.diag(K), 2.0 / 3.0, atol=1e-14)
    np.testing.assert_allclose(K[0, 2], -1.0 / 3.0, atol=1e-14)  # opposite corner
    np.testing.assert_allclose(K[0, 1], -1.0 / 6.0, atol=1e-14)  # shared edge
    # load vector of f == 1: integral of each basis = 1/4
    load = np.einsum("qn,q->n", vals, detJ * rule.weights)
    np.testing.assert_allclose(load, 0.25, atol=1e-14)


def test_single_interior_dof_value():
    mesh = square_quads(2)
    pair = assemble_poisson(mesh.levels[0])
    free = ~pair.dirichlet
    assert free.sum() == 1
    val = pair.matrix[np.ix_(free, free)].toarray()[0, 0]
    np.testing.assert_allclose(val, 8.0 / 3.0, atol=1e-14)
    # four load quarters of h^2 = 1/4 each at h = 1/2
    np.testing.assert_allclose(pair.rhs[free], 0.25, atol=1e-14)


def test_interior_row_sums_vanish():
    mesh = square_quads(8)
    lev = mesh.levels[0]
    pair = assemble_poisson(lev)
    # rows whose mesh neighbors are all free sum to zero (constants lie in
    # the kernel of the gradient); elimination clips rows next to the boundary
    touched = np.zeros(lev.n_nodes, dtype=bool)
    has_dirichlet = pair.dirichlet[lev.conn].any(axis=1)
    touched[np.unique(lev.conn[has_dirichlet])] = True
    inner = ~pair.dirichlet & ~touched
    assert inner.sum() > 0
    sums = np.asarray(pair.matrix.sum(axis=1)).ravel()
    assert np.abs(sums[inner]).max() <= 1e-12 * abs(pair.matrix).max()


def test_assembled_matrix_spd(rng):
    mesh = square_quads(6)
    pair = assemble_poisson(mesh.levels[0])
    free = np.nonzero(~pair.dirichlet)[0]
    A = pair.matrix[free][:, free].toarray()
    assert np.abs(A - A.T).max() <= 1e-12 * np.abs(A).max()
    assert np.linalg.eigvalsh(A).min() > 0


def test_residual_matches_dense_oracle(rng):
    mesh = square_quads(5)
    pair = assemble_poisson(mesh.levels[0])
    u = rng.standard_normal(pair.matrix.shape[0])
    r = residual(pair.matrix, pair.rhs, u)
    dense = pair.rhs - pair.matrix.toarray() @ u
    assert np.abs(r - dense).max() <= 1e-13 * max(1.0, np.abs(dense).max())
    assert np.array_equal(residual(pair.matrix, pair.rhs, np.zeros_like(u)), pair.rhs)
    with pytest.raises(FemError):
        residual(pair.matrix, pair.rhs, u[:-1])


@given(st.floats(-1, 1), st.floats(-1, 1))
@settings(max_examples=30, deadline=None)
def test_bilinear_map_roundtrip(x, y):
    fam = Family("quad", 1)
    coords = np.array([[0.0, 0.0], [2.0, 0.1], [2.2, 1.9], [-0.1, 2.0]])
    p = map_points(fam, coords, np.array([[x, y]]))
    xi, ok = inverse_map(fam, coords, p)
    assert ok[0]
    assert np.abs(xi[0] - [x, y]).max() <= 1e-9
