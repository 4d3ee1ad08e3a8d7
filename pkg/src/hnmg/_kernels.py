"""Sequential CSR kernels: ILU(0) factorization, triangular solves, and
Gauss-Seidel sweeps.  Multi right-hand-side variants let the spectrum module
push a whole identity block through the V-cycle in one pass."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def ilu0_factor(indptr, indices, data):
    """In-place ILU(0) on a CSR matrix with sorted indices.

    Returns (diag_pos, status): positions of the diagonal entries and 0 on
    success, 1 when a zero/tiny pivot was hit (factorization aborted).
    """
    n = indptr.shape[0] - 1
    diag_pos = np.empty(n, dtype=np.int64)
    diag_pos[:] = -1
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            if indices[p] == i:
                diag_pos[i] = p
        if diag_pos[i] < 0:
            return diag_pos, 1
    tiny = 1e-300
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            k = indices[p]
            if k >= i:
                break
            piv = data[diag_pos[k]]
            if abs(piv) < tiny:
                return diag_pos, 1
            lik = data[p] / piv
            data[p] = lik
            # subtract lik * U(k, j) for j > k on the pattern of row i
            pk = diag_pos[k] + 1
            pi = p + 1
            endk = indptr[k + 1]
            endi = indptr[i + 1]
            while pk < endk and pi < endi:
                jk = indices[pk]
                ji = indices[pi]
                if jk == ji:
                    data[pi] -= lik * data[pk]
                    pk += 1
                    pi += 1
                elif jk < ji:
                    pk += 1
                else:
                    pi += 1
        if abs(data[diag_pos[i]]) < tiny:
            return diag_pos, 1
    return diag_pos, 0


@njit(cache=True)
def ilu0_solve(indptr, indices, data, diag_pos, b, out):
    """Solve L U x = b with unit lower / stored upper factors, in place."""
    n = indptr.shape[0] - 1
    for i in range(n):
        s = b[i]
        for p in range(indptr[i], diag_pos[i]):
            s -= data[p] * out[indices[p]]
        out[i] = s
    for i in range(n - 1, -1, -1):
        s = out[i]
        for p in range(diag_pos[i] + 1, indptr[i + 1]):
            s -= data[p] * out[indices[p]]
        out[i] = s / data[diag_pos[i]]


@njit(cache=True)
def ilu0_solve_many(indptr, indices, data, diag_pos, B, out):
    """Column-blocked solve for B of shape (n, m)."""
    n = indptr.shape[0] - 1
    m = B.shape[1]
    for i in range(n):
        for c in range(m):
            out[i, c] = B[i, c]
        for p in range(indptr[i], diag_pos[i]):
            j = indices[p]
            v = data[p]
            for c in range(m):
                out[i, c] -= v * out[j, c]
    for i in range(n - 1, -1, -1):
        piv = data[diag_pos[i]]
        for p in range(diag_pos[i] + 1, indptr[i + 1]):
            j = indices[p]
            v = data[p]
            for c in range(m):
                out[i, c] -= v * out[j, c]
        for c in range(m):
            out[i, c] /= piv


@njit(cache=True)
def sgs_sweep(indptr, indices, data, diag_pos, x, b):
    """One symmetric Gauss-Seidel sweep (forward then backward) in place."""
    n = indptr.shape[0] - 1
    for i in range(n):
        s = b[i]
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j != i:
                s -= data[p] * x[j]
        x[i] = s / data[diag_pos[i]]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j != i:
                s -= data[p] * x[j]
        x[i] = s / data[diag_pos[i]]


@njit(cache=True)
def sgs_sweep_many(indptr, indices, data, diag_pos, X, B):
    n = indptr.shape[0] - 1
    m = X.shape[1]
    for i in range(n):
        piv = data[diag_pos[i]]
        for c in range(m):
            s = B[i, c]
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if j != i:
                    s -= data[p] * X[j, c]
            X[i, c] = s / piv
    for i in range(n - 1, -1, -1):
        piv = data[diag_pos[i]]
        for c in range(m):
            s = B[i, c]
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if j != i:
                    s -= data[p] * X[j, c]
            X[i, c] = s / piv
