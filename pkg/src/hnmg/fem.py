"""Lagrangian reference elements, quadrature, and Poisson assembly.

Supported families (shape, degree): quad 1/2, tri 1/2, hex 1/2.
Node orderings follow the VTK conventions for the linear and quadratic
cell types; the triquadratic hexahedron lists 8 corners, 12 edge
midpoints, 6 face centers (-x, +x, -y, +y, -z, +z) and the body center.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class FemError(Exception):
    pass


# 1D Lagrange bases on [-1, 1] used by the tensor-product families.

def _lin1d(t):
    t = np.asarray(t, dtype=float)
    return np.stack([(1.0 - t) / 2.0, (1.0 + t) / 2.0], axis=-1)


def _lin1d_d(t):
    t = np.asarray(t, dtype=float)
    out = np.empty(t.shape + (2,))
    out[..., 0] = -0.5
    out[..., 1] = 0.5
    return out


def _quad1d(t):
    t = np.asarray(t, dtype=float)
    return np.stack([t * (t - 1.0) / 2.0, 1.0 - t * t, t * (t + 1.0) / 2.0], axis=-1)


def _quad1d_d(t):
    t = np.asarray(t, dtype=float)
    return np.stack([t - 0.5, -2.0 * t, t + 0.5], axis=-1)


_1D = {1: (_lin1d, _lin1d_d, np.array([-1.0, 1.0])),
       2: (_quad1d, _quad1d_d, np.array([-1.0, 0.0, 1.0]))}

# Tensor index tuples (per node, indices into the 1D node array) in VTK order.
_QUAD_IDX = {
    1: [(0, 0), (1, 0), (1, 1), (0, 1)],
    2: [(0, 0), (2, 0), (2, 2), (0, 2),
        (1, 0), (2, 1), (1, 2), (0, 1),
        (1, 1)],
}
_HEX_IDX = {
    1: [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
        (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)],
    2: [(0, 0, 0), (2, 0, 0), (2, 2, 0), (0, 2, 0),
        (0, 0, 2), (2, 0, 2), (2, 2, 2), (0, 2, 2),
        (1, 0, 0), (2, 1, 0), (1, 2, 0), (0, 1, 0),
        (1, 0, 2), (2, 1, 2), (1, 2, 2), (0, 1, 2),
        (0, 0, 1), (2, 0, 1), (2, 2, 1), (0, 2, 1),
        (0, 1, 1), (2, 1, 1), (1, 0, 1), (1, 2, 1),
        (1, 1, 0), (1, 1, 2),
        (1, 1, 1)],
}

# Facets as (corner ids, full node tuple) per family; edges use 2 or 3 nodes,
# hex faces 4 or 9 nodes.  Orderings match the VTK cells above.
_QUAD_EDGES = [(0, 1), (1, 2), (2, 3), (3, 0)]
_TRI_EDGES = [(0, 1), (1, 2), (2, 0)]
_HEX_FACES = [(0, 1, 2, 3), (4, 5, 6, 7), (0, 1, 5, 4),
              (1, 2, 6, 5), (2, 3, 7, 6), (3, 0, 4, 7)]
_HEX_EDGES = [(0, 1), (1, 2), (2, 3), (3, 0),
              (4, 5), (5, 6), (6, 7), (7, 4),
              (0, 4), (1, 5), (2, 6), (3, 7)]
_HEX2_EDGE_MID = {e: 8 + i for i, e in enumerate(_HEX_EDGES)}
_HEX2_FACE_MID = {
    (3, 0, 4, 7): 20, (1, 2, 6, 5): 21, (0, 1, 5, 4): 22,
    (2, 3, 7, 6): 23, (0, 1, 2, 3): 24, (4, 5, 6, 7): 25,
}


@dataclass(frozen=True)
class Family:
    """A Lagrangian reference element: shape in {quad, tri, hex}, degree 1 or 2."""

    shape: str
    degree: int

    def __post_init__(self):
        if self.shape not in ("quad", "tri", "hex") or self.degree not in (1, 2):
            raise FemError(f"unsupported family {self.shape} degree {self.degree}")

    @property
    def dim(self) -> int:
        return 3 if self.shape == "hex" else 2

    @property
    def n_nodes(self) -> int:
        return {("quad", 1): 4, ("quad", 2): 9, ("tri", 1): 3,
                ("tri", 2): 6, ("hex", 1): 8, ("hex", 2): 27}[(self.shape, self.degree)]

    @property
    def n_corners(self) -> int:
        return {"quad": 4, "tri": 3, "hex": 8}[self.shape]

    def ref_nodes(self) -> np.ndarray:
        """Reference coordinates of the nodes, shape (n_nodes, dim)."""
        if self.shape == "tri":
            if self.degree == 1:
                return np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
            return np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0],
                             [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])
        pts1d = _1D[self.degree][2]
        idx = _QUAD_IDX[self.degree] if self.shape == "quad" else _HEX_IDX[self.degree]
        return np.array([[pts1d[i] for i in tup] for tup in idx])

    def facets(self):
        """List of (kind, corner indices, full node tuple) for each facet.

        2D facets are edges; hexes provide both faces and edges (edges are
        needed to detect nodes hanging on an edge shared by coarser cells).
        """
        d = self.degree
        if self.shape == "quad":
            if d == 1:
                return [("edge", e, e) for e in _QUAD_EDGES]
            return [("edge", e, e + (4 + i,)) for i, e in enumerate(_QUAD_EDGES)]
        if self.shape == "tri":
            if d == 1:
                return [("edge", e, e) for e in _TRI_EDGES]
            return [("edge", e, e + (3 + i,)) for i, e in enumerate(_TRI_EDGES)]
        out = []
        for f in _HEX_FACES:
            if d == 1:
                out.append(("face", f, f))
            else:
                ring = [(f[i], f[(i + 1) % 4]) for i in range(4)]
                mids = tuple(_HEX2_EDGE_MID.get(e, _HEX2_EDGE_MID.get(e[::-1]))
                             for e in ring)
                out.append(("face", f, f + mids + (_HEX2_FACE_MID[f],)))
        for e in _HEX_EDGES:
            if d == 1:
                out.append(("edge", e, e))
            else:
                out.append(("edge", e, e + (_HEX2_EDGE_MID[e],)))
        return out

    def boundary_facets(self):
        """Facets that define the element surface (2D edges / 3D faces)."""
        return [f for f in self.facets() if (f[0] == "face") == (self.shape == "hex")]


def _tri_shape(deg, pts):
    x, y = pts[:, 0], pts[:, 1]
    l0, l1, l2 = 1.0 - x - y, x, y
    if deg == 1:
        vals = np.stack([l0, l1, l2], axis=1)
        grads = np.broadcast_to(
            np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]), (len(pts), 3, 2)).copy()
        return vals, grads
    vals = np.stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                     4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0], axis=1)
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    lam = np.stack([l0, l1, l2], axis=1)
    grads = np.empty((len(pts), 6, 2))
    for c in range(3):
        grads[:, c, :] = (4 * lam[:, c] - 1)[:, None] * dl[c]
    for m, (a, b) in enumerate([(0, 1), (1, 2), (2, 0)]):
        grads[:, 3 + m, :] = 4 * (lam[:, a][:, None] * dl[b] + lam[:, b][:, None] * dl[a])
    return vals, grads


def shape_eval(family: Family, pts, check_inside: bool = True):
    """Evaluate shape functions and reference gradients at reference points.

    Returns (values, grads) of shapes (m, n_nodes) and (m, n_nodes, dim).
    Raises FemError if a point lies outside the reference element.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.shape[1] != family.dim:
        raise FemError("reference point dimension mismatch")
    tol = 1e-12
    if check_inside:
        if family.shape == "tri":
            ok = (pts[:, 0] >= -tol) & (pts[:, 1] >= -tol) & (pts.sum(axis=1) <= 1 + tol)
        else:
            ok = (np.abs(pts) <= 1 + tol).all(axis=1)
        if not ok.all():
            raise FemError("reference point outside element")
    if family.shape == "tri":
        return _tri_shape(family.degree, pts)
    fn, dfn, _ = _1D[family.degree]
    idx = _QUAD_IDX[family.degree] if family.shape == "quad" else _HEX_IDX[family.degree]
    per_axis = [fn(pts[:, a]) for a in range(family.dim)]
    per_axis_d = [dfn(pts[:, a]) for a in range(family.dim)]
    m, nn = len(pts), len(idx)
    vals = np.ones((m, nn))
    grads = np.empty((m, nn, family.dim))
    for n, tup in enumerate(idx):
        for a, i in enumerate(tup):
            vals[:, n] *= per_axis[a][:, i]
        for g in range(family.dim):
            acc = np.ones(m)
            for a, i in enumerate(tup):
                acc *= per_axis_d[a][:, i] if a == g else per_axis[a][:, i]
            grads[:, n, g] = acc
    return vals, grads


# Hardcoded symmetric triangle rules (weights sum to the reference area 1/2).
_TRI_RULES = {
    2: (np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]]),
        np.full(3, 1 / 6)),
    4: (None, None),  # filled below
}
_a1, _w1 = 0.445948490915965, 0.223381589678011
_a2, _w2 = 0.091576213509771, 0.109951743655322
_TRI_RULES[4] = (
    np.array([[_a1, _a1], [1 - 2 * _a1, _a1], [_a1, 1 - 2 * _a1],
              [_a2, _a2], [1 - 2 * _a2, _a2], [_a2, 1 - 2 * _a2]]),
    np.array([_w1, _w1, _w1, _w2, _w2, _w2]) / 2.0,
)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray


def quadrature(family: Family, npts_1d: int | None = None) -> QuadratureRule:
    """Quadrature for the family: Gauss-Legendre tensor rules on quads and
    hexes (degree+1 points per direction), symmetric degree-2a rules on
    triangles."""
    if family.shape == "tri":
        pts, w = _TRI_RULES[2 * family.degree]
        return QuadratureRule(pts.copy(), w.copy())
    n = npts_1d if npts_1d is not None else family.degree + 1
    x, w = np.polynomial.legendre.leggauss(n)
    if family.shape == "quad":
        X, Y = np.meshgrid(x, x, indexing="ij")
        W = np.outer(w, w)
        return QuadratureRule(np.stack([X.ravel(), Y.ravel()], axis=1), W.ravel())
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    W = w[:, None, None] * w[None, :, None] * w[None, None, :]
    return QuadratureRule(np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1), W.ravel())


def map_points(family: Family, elem_coords, ref_pts):
    """Isoparametric map of reference points; elem_coords is (n_nodes, dim)."""
    vals, _ = shape_eval(family, ref_pts, check_inside=False)
    return vals @ np.asarray(elem_coords)


def inverse_map(family: Family, elem_coords, x, tol=1e-12, maxit=40):
    """Newton inversion of the isoparametric map for a batch of points.

    Returns (ref_pts, converged mask).  Points far outside the element still
    return the final Newton iterate; callers filter on residual/ref bounds.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    elem_coords = np.asarray(elem_coords)
    m, d = x.shape
    if family.shape == "tri":
        xi = np.full((m, d), 1.0 / 3.0)
    else:
        xi = np.zeros((m, d))
    scale = max(np.ptp(elem_coords, axis=0).max(), 1e-300)
    for _ in range(maxit):
        vals, grads = shape_eval(family, xi, check_inside=False)
        r = vals @ elem_coords - x
        if np.abs(r).max() <= tol * scale:
            break
        # J[m, d, g] = d x_d / d xi_g
        J = np.einsum("mng,nd->mdg", grads, elem_coords)
        try:
            xi = xi - np.linalg.solve(J, r[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            return xi, np.zeros(m, dtype=bool)
    vals, _ = shape_eval(family, xi, check_inside=False)
    res = np.abs(vals @ elem_coords - x).max(axis=1)
    return xi, res <= 1e-9 * scale


@dataclass
class SystemPair:
    """Assembled sparse system: stiffness matrix, load vector, Dirichlet mask."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dirichlet: np.ndarray


def _element_batches(coords, conn, family, rule):
    ec = coords[conn]                                   # (E, nn, d)
    vals, grads = shape_eval(family, rule.points, check_inside=False)
    # J[e, q, d, g] = sum_n ec[e, n, d] * grads[q, n, g]
    J = np.einsum("end,qng->eqdg", ec, grads)
    detJ = np.linalg.det(J)
    if detJ.min() <= 0:
        raise FemError("singular or inverted element Jacobian")
    invJ = np.linalg.inv(J)                             # (E, q, g, d)? inv over last two
    # physical gradients: g_phys[e, q, n, d] = sum_g grads[q, n, g] * invJ[e, q, g, d]
    gphys = np.einsum("qng,eqgd->eqnd", grads, invJ)
    return ec, vals, gphys, detJ


def assemble_poisson(level, f=None) -> SystemPair:
    """Assemble the stiffness matrix and load vector of the diffusion form
    over the active elements of a mesh level, then eliminate Dirichlet rows
    and columns symmetrically (unit diagonal, homogeneous data).

    f is a callable of an (m, dim) coordinate array; f=None means f == 1.
    """
    family = level.family
    rule = quadrature(family)
    coords, conn = level.coords, level.conn
    ec, vals, gphys, detJ = _element_batches(coords, conn, family, rule)
    wdet = detJ * rule.weights[None, :]                  # (E, q)
    K = np.einsum("eqnd,eqmd,eq->enm", gphys, gphys, wdet)
    xq = np.einsum("qn,end->eqd", vals, ec)              # quadrature points, physical
    if f is None:
        fq = np.ones(xq.shape[:2])
    else:
        fq = np.asarray(f(xq.reshape(-1, xq.shape[-1]))).reshape(xq.shape[:2])
    fe = np.einsum("qn,eq,eq->en", vals, fq, wdet)

    n = level.n_nodes
    rows = np.repeat(conn, conn.shape[1], axis=1).ravel()
    cols = np.tile(conn, (1, conn.shape[1])).ravel()
    A = sp.coo_matrix((K.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    rhs = np.zeros(n)
    np.add.at(rhs, conn.ravel(), fe.ravel())

    dir_mask = level.dirichlet
    A = eliminate_dirichlet(A, dir_mask)
    rhs[dir_mask] = 0.0
    return SystemPair(A, rhs, dir_mask.copy())


def eliminate_dirichlet(A: sp.spmatrix, mask: np.ndarray) -> sp.csr_matrix:
    """Zero the rows/columns flagged by mask and put ones on their diagonal."""
    n = A.shape[0]
    keep = sp.diags((~mask).astype(float))
    fixed = sp.diags(mask.astype(float))
    out = (keep @ A @ keep + fixed).tocsr()
    out.eliminate_zeros()
    out.sort_indices()
    return out


def residual(A: sp.spmatrix, f: np.ndarray, u: np.ndarray) -> np.ndarray:
    """r = f - A u."""
    f = np.asarray(f)
    u = np.asarray(u)
    if A.shape[1] != u.shape[0] or A.shape[0] != f.shape[0]:
        raise FemError("residual size mismatch")
    return f - A @ u


def dump_matrix_market(path, M):
    from scipy.io import mmwrite
    mmwrite(str(path), sp.coo_matrix(M))
