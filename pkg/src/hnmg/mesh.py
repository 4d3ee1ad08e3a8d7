"""Hierarchical meshes built by local midpoint refinement.

A hierarchy is a list of levels; every element stored on a level is part of
that level's active tiling of the domain.  Refining a subset of elements
copies the rest, so node ids of level k-1 are preserved as the leading node
ids of level k.  New node coordinates are accumulated as weighted sums over
the parent nodes sorted by global id, which makes shared nodes bitwise
identical no matter which parent created them; deduplication can therefore
use exact coordinate matches.

After construction each level classifies its nodes as interior, master or
hanging.  A node hangs when it lies strictly inside a facet (edge in 2D,
face or edge in 3D) of an active element that does not list it; the hosting
element of smallest subdivision depth is recorded as the owner together
with the facet-trace weights of the owner's basis at the node.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .fem import Family, shape_eval, inverse_map, quadrature

SNAP_REL = 1e-12


class MeshError(Exception):
    pass


def splitmix64(seed: int, n: int) -> np.ndarray:
    """First n outputs of the splitmix64 generator for the given seed."""
    mask = np.uint64(0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        x = (np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
             + np.uint64(0x9E3779B97F4A7C15) * np.arange(1, n + 1, dtype=np.uint64))
        z = x
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9) & mask
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB) & mask
        return z ^ (z >> np.uint64(31))


# ---------------------------------------------------------------------------
# refinement templates

def _child_corner_frames(shape):
    if shape == "quad":
        boxes = [((-1, -1), (0, 0)), ((0, -1), (1, 0)), ((0, 0), (1, 1)), ((-1, 0), (0, 1))]
        return [np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]],
                         dtype=float) for lo, hi in boxes]
    if shape == "hex":
        out = []
        for oz in ((-1, 0), (0, 1)):
            for box in [((-1, -1), (0, 0)), ((0, -1), (1, 0)), ((0, 0), (1, 1)), ((-1, 0), (0, 1))]:
                (lx, ly), (hx, hy) = box
                lo, hi = oz
                out.append(np.array([
                    [lx, ly, lo], [hx, ly, lo], [hx, hy, lo], [lx, hy, lo],
                    [lx, ly, hi], [hx, ly, hi], [hx, hy, hi], [lx, hy, hi]], dtype=float))
        return out
    v0, v1, v2 = np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])
    m01, m12, m20 = (v0 + v1) / 2, (v1 + v2) / 2, (v2 + v0) / 2
    return [np.array(t) for t in
            [(v0, m01, m20), (m01, v1, m12), (m20, m12, v2), (m01, m12, m20)]]


def _map_child_ref(shape, frame, xi):
    """Map child-frame reference points into the parent reference frame."""
    xi = np.atleast_2d(xi)
    if shape == "tri":
        return frame[0] + np.outer(xi[:, 0], frame[1] - frame[0]) \
            + np.outer(xi[:, 1], frame[2] - frame[0])
    lo = frame.min(axis=0)
    hi = frame.max(axis=0)
    return lo + (xi + 1.0) / 2.0 * (hi - lo)


@dataclass(frozen=True)
class _Template:
    n_children: int
    # per child: (n_nodes, k) arrays of parent-local indices and weights,
    # rows sorted so that weights pair with ascending global ids after gather
    child_nz: list
    child_w: list
    child_ref: list          # (n_nodes, dim) node positions in the parent frame
    child_bfacet: np.ndarray  # (n_children, n_bfacets) parent boundary-facet or -1


_TEMPLATES: dict = {}


def _template(family: Family) -> _Template:
    key = (family.shape, family.degree)
    if key in _TEMPLATES:
        return _TEMPLATES[key]
    frames = _child_corner_frames(family.shape)
    ref = family.ref_nodes()
    bfacets = family.boundary_facets()
    child_nz, child_w, child_ref = [], [], []
    bmap = np.full((len(frames), len(bfacets)), -1, dtype=int)
    for ci, frame in enumerate(frames):
        pref = _map_child_ref(family.shape, frame, ref)
        vals, _ = shape_eval(family, pref, check_inside=False)
        nz = [np.nonzero(vals[s] != 0.0)[0] for s in range(len(ref))]
        child_nz.append(nz)
        child_w.append([vals[s][ix] for s, ix in enumerate(nz)])
        child_ref.append(pref)
        for bi, (kind, corners, _full) in enumerate(bfacets):
            pts = pref[list(corners)]
            pj = _facet_membership(family.shape, pts)
            bmap[ci, bi] = pj
    tmpl = _Template(len(frames), child_nz, child_w, child_ref, bmap)
    _TEMPLATES[key] = tmpl
    return tmpl


def _facet_membership(shape, pts):
    """Index of the parent boundary facet containing all pts, or -1."""
    tol = 1e-12
    if shape == "tri":
        planes = [pts[:, 1], 1.0 - pts.sum(axis=1), pts[:, 0]]  # edges (0,1),(1,2),(2,0)
        for j, v in enumerate(planes):
            if np.all(np.abs(v) <= tol):
                return j
        return -1
    # quad edges / hex faces follow the facet order of Family.boundary_facets()
    if shape == "quad":
        checks = [(1, -1.0), (0, 1.0), (1, 1.0), (0, -1.0)]  # bottom,right,top,left
    else:
        checks = [(2, -1.0), (2, 1.0), (1, -1.0), (0, 1.0), (1, 1.0), (0, -1.0)]
    for j, (ax, val) in enumerate(checks):
        if np.all(np.abs(pts[:, ax] - val) <= tol):
            return j
    return -1


# ---------------------------------------------------------------------------
# level data

@dataclass
class HangingInfo:
    """Owner facets and facet-trace parent weights of the hanging nodes."""

    ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    owner_elem: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    owner_facet: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    owner_ref: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    indptr: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=int))
    parent_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    parent_w: np.ndarray = field(default_factory=lambda: np.empty(0))

    def parents_of(self, pos: int):
        s, e = self.indptr[pos], self.indptr[pos + 1]
        return self.parent_ids[s:e], self.parent_w[s:e]


INTERIOR, MASTER, HANGING = 0, 1, 2


class MeshLevel:
    """One level of the hierarchy: an active tiling plus node classification."""

    def __init__(self, family, coords, conn, depth, created, parent_elem,
                 boundary, src_elem, src_ref):
        self.family = family
        self.coords = coords
        self.conn = conn
        self.depth = depth
        self.created = created
        self.parent_elem = parent_elem
        self.boundary = boundary
        self.src_elem = src_elem
        self.src_ref = src_ref
        self.klass = None
        self.dirichlet = None
        self.hang = HangingInfo()

    @property
    def dim(self):
        return self.family.dim

    @property
    def n_nodes(self):
        return self.coords.shape[0]

    @property
    def n_elems(self):
        return self.conn.shape[0]

    def centroids(self):
        nc = self.family.n_corners
        return self.coords[self.conn[:, :nc]].mean(axis=1)

    def element_volumes(self):
        rule = quadrature(self.family)
        _, grads = shape_eval(self.family, rule.points, check_inside=False)
        ec = self.coords[self.conn]
        J = np.einsum("end,qng->eqdg", ec, grads)
        return np.linalg.det(J) @ rule.weights

    def snap(self):
        span = np.linalg.norm(np.ptp(self.coords, axis=0))
        return SNAP_REL * max(span, 1.0)

    def interface_facets(self):
        """Unique (element, facet index) owner pairs hosting hanging nodes."""
        if len(self.hang.ids) == 0:
            return []
        pairs = np.stack([self.hang.owner_elem, self.hang.owner_facet], axis=1)
        return [tuple(p) for p in np.unique(pairs, axis=0)]

    def masters(self):
        return np.nonzero(self.klass == MASTER)[0]

    def hanging_nodes(self):
        return self.hang.ids

    def validate(self):
        vols = self.element_volumes()
        if vols.min() <= 0:
            raise MeshError("degenerate element (non-positive volume)")
        tree = cKDTree(self.coords)
        pairs = tree.query_pairs(0.5 * self.snap())
        if pairs:
            raise MeshError(f"distinct nodes closer than snap tolerance: {sorted(pairs)[:3]}")
        counts = np.bincount(np.array([INTERIOR, MASTER, HANGING]))  # noqa: F841
        k = self.klass
        assert (k >= 0).all() and (k <= 2).all()
        return True


# ---------------------------------------------------------------------------
# hanging-node detection

def _facet_pin_data(family):
    """Per facet: (kind, corner ids, full tuple, pinned axes/planes)."""
    out = []
    ref = family.ref_nodes()
    for kind, corners, full in family.facets():
        pts = ref[list(corners)]
        if family.shape == "tri":
            pins = []
            for j, v in enumerate([pts[:, 1], 1.0 - pts.sum(axis=1), pts[:, 0]]):
                if np.all(np.abs(v) <= 1e-12):
                    pins.append(j)
            out.append((kind, corners, full, tuple(pins)))
        else:
            pins = []
            for ax in range(family.dim):
                for val in (-1.0, 1.0):
                    if np.all(np.abs(pts[:, ax] - val) <= 1e-12):
                        pins.append((ax, val))
            out.append((kind, corners, full, tuple(pins)))
    return out


def _strictly_inside_facet(family, xi, pins, kind, tol=1e-9):
    """Mask of reference points lying strictly inside the pinned facet, plus
    the points projected exactly onto it."""
    xi = np.atleast_2d(xi).copy()
    if family.shape == "tri":
        lam = np.stack([1.0 - xi.sum(axis=1), xi[:, 0], xi[:, 1]], axis=1)
        plane = {0: lam[:, 2], 1: lam[:, 0], 2: lam[:, 1]}[pins[0]]
        inside = np.abs(plane) <= tol
        # the two barycentric coordinates spanning the edge stay strictly inside
        others = [c for c in range(3) if c != {0: 2, 1: 0, 2: 1}[pins[0]]]
        for c in others:
            inside &= lam[:, c] > tol
            inside &= lam[:, c] < 1 - tol
        # project: zero the pinned barycentric coordinate
        lam_p = lam.copy()
        lam_p[:, {0: 2, 1: 0, 2: 1}[pins[0]]] = 0.0
        lam_p /= lam_p.sum(axis=1)[:, None]
        xi_p = np.stack([lam_p[:, 1], lam_p[:, 2]], axis=1)
        return inside, xi_p
    pinned_axes = [ax for ax, _ in pins]
    inside = np.ones(len(xi), dtype=bool)
    for ax, val in pins:
        inside &= np.abs(xi[:, ax] - val) <= tol
    for ax in range(family.dim):
        if ax not in pinned_axes:
            inside &= np.abs(xi[:, ax]) < 1 - tol
    for ax, val in pins:
        xi[:, ax] = val
    return inside, xi


def _candidate_facets(level):
    """(element, facet index) pairs whose facet could host foreign nodes."""
    fam = level.family
    pin = _facet_pin_data(fam)
    conn = level.conn
    cand = []
    if fam.dim == 2:
        bf = fam.boundary_facets()
        keys = np.stack([np.sort(conn[:, list(full)], axis=1) for _, _, full in bf], axis=1)
        flat = keys.reshape(-1, keys.shape[-1])
        _, inv, counts = np.unique(flat, axis=0, return_inverse=True, return_counts=True)
        unpaired = (counts[inv] == 1).reshape(conn.shape[0], len(bf))
        for e, b in zip(*np.nonzero(unpaired)):
            cand.append((int(e), int(b)))
        return cand, pin
    # 3D: unpaired faces, plus edges (edge hosting cannot be inferred from
    # face pairing alone); geometric edges shared by several elements are
    # scanned once through their smallest-depth witness
    faces = [i for i, f in enumerate(pin) if f[0] == "face"]
    edges = [i for i, f in enumerate(pin) if f[0] == "edge"]
    keys = np.stack([np.sort(conn[:, list(pin[i][2])], axis=1) for i in faces], axis=1)
    flat = keys.reshape(-1, keys.shape[-1])
    _, inv, counts = np.unique(flat, axis=0, return_inverse=True, return_counts=True)
    unpaired = (counts[inv] == 1).reshape(conn.shape[0], len(faces))
    for e, b in zip(*np.nonzero(unpaired)):
        cand.append((int(e), faces[int(b)]))
    ekeys = np.stack([np.sort(conn[:, list(pin[i][2])], axis=1) for i in edges], axis=1)
    eflat = ekeys.reshape(-1, ekeys.shape[-1])
    _, einv = np.unique(eflat, axis=0, return_inverse=True)
    einv = einv.reshape(conn.shape[0], len(edges))
    best = {}
    depth = level.depth
    for e in range(conn.shape[0]):
        for j, i in enumerate(edges):
            key = int(einv[e, j])
            cur = best.get(key)
            if cur is None or (depth[e], e) < (depth[cur[0]], cur[0]):
                best[key] = (e, i)
    cand.extend(best.values())
    return cand, pin


def _detect_hanging(level):
    fam = level.family
    coords, conn = level.coords, level.conn
    snap = level.snap()
    cand, pin = _candidate_facets(level)
    if not cand:
        return {}
    tree = cKDTree(coords)
    # one vectorized ball query over all candidate facets
    centers = np.empty((len(cand), fam.dim))
    radii = np.empty(len(cand))
    for j, (e, fi) in enumerate(cand):
        pts = coords[conn[e, list(pin[fi][1])]]
        centers[j] = pts.mean(axis=0)
        radii[j] = np.linalg.norm(pts - centers[j], axis=1).max()
    balls = tree.query_ball_point(centers, radii * 1.0000001 + snap)
    hits = {}  # node -> list of (depth, elem, facet, xi)
    for j, (e, fi) in enumerate(cand):
        kind, corners, full, pins = pin[fi]
        idx = np.asarray(balls[j], dtype=int)
        if idx.size <= len(corners):
            continue
        idx = idx[~np.isin(idx, conn[e])]
        if idx.size == 0:
            continue
        pts = coords[conn[e, list(corners)]]
        # cheap distance prefilter against the facet's affine hull
        x = coords[idx]
        if kind == "edge":
            a, b = pts[0], pts[1]
            t = b - a
            t = t / np.linalg.norm(t)
            dvec = (x - a) - np.outer((x - a) @ t, t)
            dist = np.linalg.norm(dvec, axis=1)
        else:
            n1 = np.cross(pts[1] - pts[0], pts[3] - pts[0])
            nrm = np.linalg.norm(n1)
            if nrm == 0:
                continue
            dist = np.abs((x - pts[0]) @ (n1 / nrm))
        keep = dist <= max(10 * snap, 1e-9 * np.linalg.norm(pts[1] - pts[0]))
        idx, x = idx[keep], x[keep]
        if idx.size == 0:
            continue
        ec = coords[conn[e]]
        xi, ok = inverse_map(fam, ec, x)
        if not ok.any():
            continue
        inside, xi_p = _strictly_inside_facet(fam, xi, pins, kind)
        take = ok & inside
        for j in np.nonzero(take)[0]:
            hits.setdefault(int(idx[j]), []).append(
                (int(level.depth[e]), int(e), int(fi), xi_p[j]))
    return hits


def classify_nodes(level) -> np.ndarray:
    """Detect hanging nodes, record owner facets and parent weights, and tag
    every node interior / master / hanging.  Returns the tag array."""
    fam = level.family
    hits = _detect_hanging(level)
    n = level.n_nodes
    klass = np.zeros(n, dtype=np.uint8)
    hang_ids = np.array(sorted(hits.keys()), dtype=int)
    owner_elem = np.empty(len(hang_ids), dtype=int)
    owner_facet = np.empty(len(hang_ids), dtype=int)
    owner_ref = np.empty((len(hang_ids), fam.dim))
    indptr = [0]
    par_ids, par_w = [], []
    for pos, nid in enumerate(hang_ids):
        best = min(hits[nid], key=lambda h: (h[0], h[1], h[2]))
        owner_elem[pos], owner_facet[pos] = best[1], best[2]
        owner_ref[pos] = best[3]
        vals, _ = shape_eval(fam, best[3][None, :], check_inside=False)
        vals = vals[0]
        nz = np.nonzero(np.abs(vals) > 1e-14)[0]
        ids = level.conn[best[1], nz]
        if nid in ids:
            raise MeshError(f"node {nid} would be its own constraint parent")
        order = np.argsort(ids)
        par_ids.extend(ids[order].tolist())
        par_w.extend(vals[nz][order].tolist())
        indptr.append(len(par_ids))
    klass[hang_ids] = HANGING
    parents = np.array(par_ids, dtype=int)
    is_master = np.zeros(n, dtype=bool)
    if parents.size:
        is_master[parents] = True
    is_master[hang_ids] = False
    klass[is_master] = MASTER
    level.klass = klass
    level.hang = HangingInfo(hang_ids, owner_elem, owner_facet, owner_ref,
                             np.array(indptr, dtype=int),
                             parents, np.array(par_w))
    return klass


def _dirichlet_from_boundary(level):
    fam = level.family
    mask = np.zeros(level.n_nodes, dtype=bool)
    bf = fam.boundary_facets()
    for bi, (_kind, _corners, full) in enumerate(bf):
        rows = np.nonzero(level.boundary[:, bi])[0]
        if rows.size:
            mask[level.conn[np.ix_(rows, list(full))].ravel()] = True
    level.dirichlet = mask
    return mask


def _finalize(level, expect_conforming=False):
    classify_nodes(level)
    if expect_conforming and len(level.hang.ids):
        raise MeshError("coarse mesh is not conforming (hanging nodes present)")
    _dirichlet_from_boundary(level)
    return level


# ---------------------------------------------------------------------------
# hierarchy

class HierarchicalMesh:
    """An ordered list of levels produced by local midpoint refinement."""

    def __init__(self, coords, conn, family: Family, validate: bool = True):
        coords = np.asarray(coords, dtype=float) + 0.0
        conn = np.asarray(conn, dtype=int)
        if conn.ndim != 2 or conn.shape[1] != family.n_nodes:
            raise MeshError("connectivity width does not match the element family")
        if conn.min(initial=0) < 0 or conn.max(initial=-1) >= len(coords):
            raise MeshError("connectivity index out of range")
        for row in conn:
            if len(set(row.tolist())) != len(row):
                raise MeshError("repeated node id within an element")
        used = np.zeros(len(coords), dtype=bool)
        used[conn.ravel()] = True
        if not used.all():
            raise MeshError("mesh file lists unused nodes")
        if len(np.unique(coords, axis=0)) != len(coords):
            raise MeshError("distinct node ids with identical coordinates")
        E = conn.shape[0]
        level = MeshLevel(
            family, coords, conn,
            depth=np.zeros(E, dtype=int), created=np.zeros(E, dtype=int),
            parent_elem=np.full(E, -1, dtype=int),
            boundary=_boundary_flags(conn, family),
            src_elem=np.full(len(coords), -1, dtype=int),
            src_ref=np.zeros((len(coords), family.dim)),
        )
        vols = level.element_volumes()
        if vols.min() <= 0:
            raise MeshError("degenerate (non-positive volume) element in input")
        # corner-degenerate cells keep a positive net volume; check the map
        # determinant at the reference nodes as well
        ref = family.ref_nodes()
        _, grads = shape_eval(family, ref, check_inside=False)
        J = np.einsum("end,qng->eqdg", coords[conn], grads)
        if np.linalg.det(J).min() <= 0:
            raise MeshError("degenerate element (singular corner Jacobian)")
        _finalize(level, expect_conforming=True)
        self.levels = [level]
        self.marker_history = []

    @property
    def family(self):
        return self.levels[0].family

    @property
    def n_levels(self):
        return len(self.levels)

    def find_node(self, point, level=-1):
        lev = self.levels[level]
        d, i = cKDTree(lev.coords).query(np.asarray(point, dtype=float))
        if d > lev.snap() * 10:
            raise MeshError(f"no node at {point}")
        return int(i)

    def refine(self, marked) -> MeshLevel:
        """Append a new level: children replace the marked active elements,
        every other element is copied."""
        lev = self.levels[-1]
        fam = lev.family
        marked = list(marked)
        marked = np.unique(np.asarray(marked, dtype=int)) if marked else np.empty(0, dtype=int)
        if marked.size and (marked.min() < 0 or marked.max() >= lev.n_elems):
            raise MeshError("marked element id out of range")
        tmpl = _template(fam)
        keep = np.setdiff1d(np.arange(lev.n_elems), marked)

        N0 = lev.n_nodes
        nn = fam.n_nodes
        dim = fam.dim
        M = marked.size
        n_child = tmpl.n_children

        # candidate coordinates for every (marked element, child, slot)
        cand = np.empty((M, n_child, nn, dim)) if M else np.empty((0, n_child, nn, dim))
        for ci in range(n_child):
            for s in range(nn):
                nz, w = tmpl.child_nz[ci][s], tmpl.child_w[ci][s]
                gids = lev.conn[marked][:, nz]                     # (M, k)
                order = np.argsort(gids, axis=1, kind="stable")
                gsort = np.take_along_axis(gids, order, axis=1)
                wsort = np.broadcast_to(w, gids.shape)
                wsort = np.take_along_axis(wsort, order, axis=1)
                acc = np.zeros((M, dim))
                for j in range(gids.shape[1]):
                    acc = acc + wsort[:, j, None] * lev.coords[gsort[:, j]]
                cand[:, ci, s, :] = acc

        flat = cand.reshape(-1, dim)
        if flat.shape[0]:
            allc = np.vstack([lev.coords, flat])
            uq, first, inv = np.unique(allc, axis=0, return_index=True, return_inverse=True)
            new_rows = np.nonzero(first >= N0)[0]
            order = np.argsort(first[new_rows], kind="stable")
            new_rows = new_rows[order]
            row_to_id = np.empty(len(uq), dtype=int)
            old_rows = first < N0
            row_to_id[old_rows] = first[old_rows]
            row_to_id[new_rows] = N0 + np.arange(len(new_rows))
            cand_ids = row_to_id[inv[N0:]].reshape(M, n_child, nn)
            coords_new = np.vstack([lev.coords, uq[new_rows]])
            first_cand = first[new_rows] - N0
        else:
            cand_ids = np.empty((0, n_child, nn), dtype=int)
            coords_new = lev.coords.copy()
            first_cand = np.empty(0, dtype=int)

        E_new = keep.size + M * n_child
        conn_new = np.empty((E_new, nn), dtype=int)
        depth = np.empty(E_new, dtype=int)
        created = np.empty(E_new, dtype=int)
        parent_elem = np.empty(E_new, dtype=int)
        boundary = np.zeros((E_new, lev.boundary.shape[1]), dtype=bool)

        nk = keep.size
        conn_new[:nk] = lev.conn[keep]
        depth[:nk] = lev.depth[keep]
        created[:nk] = lev.created[keep]
        parent_elem[:nk] = keep
        boundary[:nk] = lev.boundary[keep]

        k_new = len(self.levels)
        # children are laid out parent-major so ids stay stable and readable
        pos = nk
        child_rows = cand_ids.reshape(M, n_child, nn)
        for mi in range(M):
            e = marked[mi]
            for ci in range(n_child):
                conn_new[pos] = child_rows[mi, ci]
                depth[pos] = lev.depth[e] + 1
                created[pos] = k_new
                parent_elem[pos] = e
                for bi in range(boundary.shape[1]):
                    pf = tmpl.child_bfacet[ci, bi]
                    if pf >= 0:
                        boundary[pos, bi] = lev.boundary[e, pf]
                pos += 1

        src_elem = np.full(coords_new.shape[0], -1, dtype=int)
        src_ref = np.zeros((coords_new.shape[0], dim))
        if first_cand.size:
            # provenance of each new node: its first-creating candidate slot
            mi = first_cand // (n_child * nn)
            rem = first_cand % (n_child * nn)
            ci, s = rem // nn, rem % nn
            src_elem[N0:] = marked[mi]
            ref_all = np.stack(tmpl.child_ref)        # (n_child, nn, dim)
            src_ref[N0:] = ref_all[ci, s]

        new = MeshLevel(fam, coords_new, conn_new, depth, created, parent_elem,
                        boundary, src_elem, src_ref)
        _finalize(new)
        self.levels.append(new)
        self.marker_history.append(np.asarray(marked))
        return new


def _boundary_flags(conn, family):
    bf = family.boundary_facets()
    keys = np.stack([np.sort(conn[:, list(full)], axis=1) for _, _, full in bf], axis=1)
    flat = keys.reshape(-1, keys.shape[-1])
    _, inv, counts = np.unique(flat, axis=0, return_inverse=True, return_counts=True)
    if counts.max(initial=1) > 2:
        raise MeshError("facet shared by more than two elements")
    return (counts[inv] == 1).reshape(conn.shape[0], len(bf))


def refine(mesh: HierarchicalMesh, k: int, marked) -> MeshLevel:
    """Refine the finest level (k must address it) with the marked set."""
    if k != mesh.n_levels - 1:
        raise MeshError("only the finest level can be refined")
    return mesh.refine(marked)


# ---------------------------------------------------------------------------
# marker strategies

def mark_all(level) -> np.ndarray:
    return np.arange(level.n_elems)


def mark_quadrant(level) -> np.ndarray:
    """Active elements whose centroid lies in the first quadrant."""
    c = level.centroids()
    m = (c[:, 0] >= 0) & (c[:, 1] >= 0)
    return np.nonzero(m)[0]


def mark_circle(level, k: int) -> np.ndarray:
    """Active elements whose centroid lies inside the disc of radius pi/(4k)."""
    if k < 1:
        raise MeshError("circle marking pass index must be >= 1")
    c = level.centroids()
    r = np.linalg.norm(c, axis=1)
    return np.nonzero(r < np.pi / (4.0 * k))[0]


def mark_random(level, fraction: float, seed: int) -> np.ndarray:
    """floor(fraction * n_active) elements drawn without replacement from a
    splitmix64 stream; identical output for identical seeds on any platform."""
    if not 0.0 <= fraction <= 1.0:
        raise MeshError("fraction must be in [0, 1]")
    n = level.n_elems
    m = int(np.floor(fraction * n))
    if m == 0:
        return np.empty(0, dtype=int)
    keys = splitmix64(seed, n)
    order = np.argsort(keys, kind="stable")
    return np.sort(order[:m])
