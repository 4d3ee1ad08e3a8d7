"""Inter-level prolongations and Galerkin coarse operators.

The plain prolongation injects a coarse-level coefficient vector into the
next finer level: unit rows for nodes already present, coarse-element basis
values at the node location for new nodes.  Composing with the transpose of
the coarse constraint operator gives the constrained prolongation used by
the multigrid hierarchy; the coarse operator is the triple product with the
constrained fine matrix.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .fem import shape_eval


class TransferError(Exception):
    pass


def injection_matrix(mesh, k: int) -> sp.csr_matrix:
    """Prolongation from level k-1 to level k, shape (N_k, N_{k-1}).

    New nodes interpolate inside the element that created them; values on
    shared facets agree between any containing parent, so the creator is a
    valid designated parent and the build is deterministic.
    """
    if not 1 <= k < mesh.n_levels:
        raise TransferError("level out of range for injection")
    fine = mesh.levels[k]
    coarse = mesh.levels[k - 1]
    fam = fine.family
    n_old = coarse.n_nodes
    rows = [np.arange(n_old)]
    cols = [np.arange(n_old)]
    vals = [np.ones(n_old)]
    new_ids = np.nonzero(fine.src_elem >= 0)[0]
    new_ids = new_ids[new_ids >= n_old]
    if new_ids.size:
        v, _ = shape_eval(fam, fine.src_ref[new_ids], check_inside=False)
        parents = coarse.conn[fine.src_elem[new_ids]]        # (m, nn)
        nz = v != 0.0
        rr = np.repeat(new_ids, nz.sum(axis=1))
        cc = parents[nz]
        vv = v[nz]
        rows.append(rr)
        cols.append(cc)
        vals.append(vv)
    Q = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(fine.n_nodes, n_old))
    Q.sort_indices()
    return Q


def constrained_prolongation(Q: sp.spmatrix, R_coarse: sp.spmatrix) -> sp.csr_matrix:
    """Compose injection with the transpose of the coarse constraints."""
    if Q.shape[1] != R_coarse.shape[0]:
        raise TransferError("prolongation/constraint dimension mismatch")
    out = (Q @ R_coarse.T).tocsr()
    out.eliminate_zeros()
    out.sort_indices()
    return out


def strip_nonfree(A: sp.spmatrix, nonfree: np.ndarray) -> sp.csr_matrix:
    """Zero the rows/columns of the flagged dofs (drops their unit diagonal)."""
    keep = sp.diags((~nonfree).astype(float))
    out = (keep @ A @ keep).tocsr()
    out.eliminate_zeros()
    return out


def add_unit_diagonal(A: sp.spmatrix, where: np.ndarray) -> sp.csr_matrix:
    out = (A + sp.diags(where.astype(float))).tocsr()
    out.sort_indices()
    return out


def galerkin_coarsen(A_fine: sp.spmatrix, Qhat: sp.spmatrix,
                     nonfree_fine: np.ndarray, nonfree_coarse: np.ndarray) -> sp.csr_matrix:
    """Triple product onto the coarse level.  The unit diagonals parked on
    constrained/fixed rows never belong in the product, so they are stripped
    first and fresh ones are installed on the coarse result."""
    S = strip_nonfree(A_fine, nonfree_fine)
    coarse = (Qhat.T @ S @ Qhat).tocsr()
    coarse = strip_nonfree(coarse, nonfree_coarse)
    return add_unit_diagonal(coarse, nonfree_coarse)
