"""Continuity constraints for meshes with arbitrary-level hanging nodes.

Every hanging node stores the facet-trace weights of its owner element
(see mesh.classify_nodes).  Expanding those weights recursively until only
interior/master nodes remain yields, for each hanging node, a small linear
combination of unconstrained nodes; collecting the combinations row-wise
gives the constraint operator: identity on interior and master rows, the
master-to-hanging coupling block, and zero rows for hanging nodes.  The
expansion is a forward substitution over the hanging-node dependency graph
and never solves a linear system.

The same graph is exposed as a family tree (direct_children) and as a
per-master depth-first row builder with the uncle/great-uncle pruning rule;
on every mesh the tests exercise, both constructions agree with the
substitution result.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .fem import shape_eval, inverse_map
from .mesh import HANGING, MASTER

DROP_TOL = 1e-14


class ConstraintError(Exception):
    pass


def direct_children(level, node: int):
    """Children of a node: hanging nodes whose owner-facet trace gives the
    node a nonzero weight.  Returns [(child id, weight)] sorted by child."""
    out = []
    hg = level.hang
    for pos, hid in enumerate(hg.ids):
        pids, w = hg.parents_of(pos)
        hitpos = np.nonzero(pids == node)[0]
        for h in hitpos:
            out.append((int(hid), float(w[h])))
    out.sort(key=lambda t: t[0])
    return out


def family_tree(level) -> dict:
    """parent id -> list of (child id, weight) over all hanging nodes."""
    tree: dict = {}
    hg = level.hang
    for pos, hid in enumerate(hg.ids):
        pids, w = hg.parents_of(pos)
        for p, x in zip(pids, w):
            tree.setdefault(int(p), []).append((int(hid), float(x)))
    for v in tree.values():
        v.sort(key=lambda t: t[0])
    return tree


def constraint_row(level, master: int, max_depth: int | None = None) -> dict:
    """Coefficients of the hanging nodes absorbed into a master's basis.

    Depth-first walk over the family tree; a step to child c through the
    path (master, ..., a, ..., p) is pruned when c is already a direct child
    of an ancestor a other than its immediate parent p.  A revisited node on
    the current path means the tree is malformed.
    """
    tree = family_tree(level)
    children_sets = {p: {c for c, _ in kids} for p, kids in tree.items()}
    out: dict = {}
    limit = max_depth if max_depth is not None else max(level.created.max() + 1, 1)

    def visit(node, coeff, ancestors, on_path):
        if len(ancestors) > limit:
            raise ConstraintError("family tree deeper than the level count")
        for child, w in tree.get(node, ()):
            if child in on_path:
                raise ConstraintError(f"cycle through node {child} in family tree")
            if any(child in children_sets.get(a, ()) for a in ancestors):
                continue
            out[child] = out.get(child, 0.0) + coeff * w
            visit(child, coeff * w, ancestors + (node,), on_path | {child})

    visit(master, 1.0, (), frozenset({master}))
    return {k: v for k, v in out.items() if abs(v) > DROP_TOL}


class ConstraintOperator:
    """Sparse N-by-N matrix tying hanging values to master values: identity
    on interior/master rows, weights in the (master, hanging) block, zero
    hanging rows."""

    def __init__(self, matrix, klass):
        self.matrix = matrix
        self.klass = klass

    @property
    def shape(self):
        return self.matrix.shape

    def hanging_mask(self):
        return self.klass == HANGING

    def coupling(self, master: int) -> dict:
        row = self.matrix.getrow(master)
        return {int(j): float(v) for j, v in zip(row.indices, row.data)
                if j != master}

    def format_rows(self) -> str:
        lines = []
        for m in np.nonzero(self.klass == MASTER)[0]:
            cpl = self.coupling(int(m))
            ent = ", ".join(f"{j}: {v:.6g}" for j, v in sorted(cpl.items()))
            lines.append(f"{m} -> {{{ent}}}")
        return "\n".join(lines)


def _expand_hanging(level):
    """Forward substitution: for each hanging node, its expansion over
    interior/master nodes, processed in dependency order."""
    hg = level.hang
    n_h = len(hg.ids)
    pos_of = {int(h): i for i, h in enumerate(hg.ids)}
    # dependency edges run from hanging parents to their hanging children
    indeg = np.zeros(n_h, dtype=int)
    dependents = [[] for _ in range(n_h)]
    for pos in range(n_h):
        pids, _ = hg.parents_of(pos)
        for p in pids:
            pp = pos_of.get(int(p))
            if pp is not None:
                indeg[pos] += 1
                dependents[pp].append(pos)
    order = [i for i in range(n_h) if indeg[i] == 0]
    head = 0
    while head < len(order):
        cur = order[head]
        head += 1
        for d in dependents[cur]:
            indeg[d] -= 1
            if indeg[d] == 0:
                order.append(d)
    if len(order) != n_h:
        raise ConstraintError("cyclic hanging-node dependencies (malformed tree)")

    expansion = [None] * n_h
    for pos in order:
        pids, w = hg.parents_of(pos)
        acc: dict = {}
        for p, x in zip(pids, w):
            pp = pos_of.get(int(p))
            if pp is None:
                acc[int(p)] = acc.get(int(p), 0.0) + float(x)
            else:
                for q, y in expansion[pp].items():
                    acc[q] = acc.get(q, 0.0) + float(x) * y
        expansion[pos] = {q: v for q, v in acc.items() if abs(v) > DROP_TOL}
    return expansion


def constraint_operator(level) -> ConstraintOperator:
    """Assemble the constraint matrix for a classified mesh level."""
    n = level.n_nodes
    klass = level.klass
    hg = level.hang
    expansion = _expand_hanging(level)

    free = np.nonzero(klass != HANGING)[0]
    rows = [free]
    cols = [free]
    vals = [np.ones(len(free))]
    for pos, hid in enumerate(hg.ids):
        for m, v in sorted(expansion[pos].items()):
            rows.append(np.array([m]))
            cols.append(np.array([int(hid)]))
            vals.append(np.array([v]))
    R = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n))
    R.sum_duplicates()
    R.sort_indices()
    return ConstraintOperator(R, klass.copy())


def hanging_expansion(level) -> dict:
    """hanging node id -> {interior/master id: coefficient}."""
    expansion = _expand_hanging(level)
    return {int(h): expansion[i] for i, h in enumerate(level.hang.ids)}


# ---------------------------------------------------------------------------
# continuity verification

def verify_continuity(level, R: ConstraintOperator | sp.spmatrix,
                      samples_per_facet: int = 5) -> float:
    """Maximum jump of any constrained basis function across the interface
    facets, sampled at generic interior points of each owner facet.

    Per facet the finer elements covering it are located in one batch: one
    ball query around the facet plus a vectorized map inversion over all
    samples per candidate element.
    """
    from scipy.spatial import cKDTree

    M = R.matrix if isinstance(R, ConstraintOperator) else R
    Mc = M.tocsc()
    fam = level.family
    pairs = level.interface_facets()
    if not pairs:
        return 0.0
    pin = {i: p for i, p in enumerate(_pin_list(fam))}
    centroids = level.centroids()
    tree = cKDTree(centroids)
    tol = 1e-9
    worst = 0.0
    for e, fi in pairs:
        kind, corners, _full, pins = pin[fi]
        samples = _facet_samples(fam, kind, pins, samples_per_facet)
        ec = level.coords[level.conn[e]]
        vals, _ = shape_eval(fam, samples, check_inside=False)
        xs = vals @ ec
        fpts = level.coords[level.conn[e, list(corners)]]
        fcen = fpts.mean(axis=0)
        frad = np.linalg.norm(fpts - fcen, axis=1).max()
        cand = np.asarray(tree.query_ball_point(fcen, 1.25 * frad + level.snap()),
                          dtype=int)
        depth_e = level.depth[e]
        if cand.size:
            # keep only elements whose centroid sits within their own size
            # of the facet's affine hull; the rest cannot contain samples
            cc = centroids[cand]
            nc = level.family.n_corners
            corners_c = level.coords[level.conn[cand][:, :nc]]
            diam = np.ptp(corners_c, axis=1).max(axis=1)
            if kind == "edge":
                t = fpts[1] - fpts[0]
                t = t / np.linalg.norm(t)
                dv = (cc - fpts[0]) - np.outer((cc - fpts[0]) @ t, t)
                dist = np.linalg.norm(dv, axis=1)
            else:
                nrm = np.cross(fpts[1] - fpts[0], fpts[3] - fpts[0])
                nrm = nrm / np.linalg.norm(nrm)
                dist = np.abs((cc - fpts[0]) @ nrm)
            keep = (dist <= 0.87 * diam + level.snap()) & (level.depth[cand] > depth_e)
            cand = cand[keep]
        covered = np.zeros(len(samples), dtype=bool)
        for oe in cand:
            if oe == e:
                continue
            oc = level.coords[level.conn[oe]]
            xi, ok = inverse_map(fam, oc, xs)
            if fam.shape == "tri":
                lam0 = 1 - xi.sum(axis=1)
                inside = ok & (lam0 >= -tol) & (xi >= -tol).all(axis=1)
            else:
                inside = ok & (np.abs(xi) <= 1 + tol).all(axis=1)
            if not inside.any():
                continue
            ov, _ = shape_eval(fam, xi[inside], check_inside=False)
            covered |= inside
            cols = np.concatenate([level.conn[e], level.conn[oe]])
            sub = Mc[:, cols]
            coef = np.concatenate([vals[inside], -ov], axis=1)   # (m, 2*nn)
            jump = np.abs(sub @ coef.T).max()
            worst = max(worst, float(jump))
        if not covered.all():
            raise ConstraintError(
                f"interface facet ({e}, {fi}): fine side not found for some samples")
    return worst


def _pin_list(fam):
    from .mesh import _facet_pin_data
    return _facet_pin_data(fam)


def _facet_samples(fam, kind, pins, m):
    """Reference points strictly inside a facet, offset from symmetric spots
    so samples avoid sub-facet boundaries of any nested refinement."""
    t = (np.arange(m) + 0.5861) / (m + 0.2137)
    if fam.shape == "tri":
        lam = np.zeros((m, 3))
        pinned = {0: 2, 1: 0, 2: 1}[pins[0]]
        others = [c for c in range(3) if c != pinned]
        lam[:, others[0]] = t
        lam[:, others[1]] = 1 - t
        return np.stack([lam[:, 1], lam[:, 2]], axis=1)
    pinned_axes = {ax for ax, _ in pins}
    free = [ax for ax in range(fam.dim) if ax not in pinned_axes]
    if len(free) == 1:
        pts = np.zeros((m, fam.dim))
        pts[:, free[0]] = 2 * t - 1
    else:
        g = int(np.ceil(np.sqrt(m)))
        u = (np.arange(g) + 0.5861) / (g + 0.2137)
        v = (np.arange(g) + 0.3719) / (g + 0.1423)
        U, V = np.meshgrid(2 * u - 1, 2 * v - 1, indexing="ij")
        pts = np.zeros((g * g, fam.dim))
        pts[:, free[0]] = U.ravel()
        pts[:, free[1]] = V.ravel()
    for ax, val in pins:
        pts[:, ax] = val
    return pts
