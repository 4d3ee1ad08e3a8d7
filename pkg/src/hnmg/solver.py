"""Residual-correction solver with a Galerkin multigrid preconditioner.

The hierarchy keeps, per level, the constrained operator (unit diagonal on
hanging and Dirichlet rows), the constrained inter-level prolongation with
non-free rows/columns masked, and a smoother bound to its dof mask.  The
V-cycle can run as a stationary solver or precondition CG/GMRES.  Smoothing
masks implement two modes: the whole free set per level (global), or only
the dofs interior to the elements created on that level (the classical
local-smoothing baseline, which excludes master and hanging interface dofs).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import _kernels
from .constraints import constraint_operator
from .fem import SystemPair
from .mesh import HANGING, INTERIOR
from .transfer import (add_unit_diagonal, constrained_prolongation, galerkin_coarsen,
                       injection_matrix, strip_nonfree)

SMOOTHERS = ("richardson-ilu0", "richardson-jacobi", "sym-gauss-seidel")


class SolverError(Exception):
    pass


@dataclass
class SmootherSpec:
    kind: str = "richardson-ilu0"
    omega: float = 0.8
    nu_pre: int = 1
    nu_post: int = 1
    steps_per_application: int = 1

    def __post_init__(self):
        if self.kind not in SMOOTHERS:
            raise SolverError(f"unknown smoother {self.kind!r}")
        if self.steps_per_application < 1:
            raise SolverError("steps_per_application must be >= 1")


class LevelSmoother:
    """Damped update x <- x + omega * M^-1 (b - A x) restricted to a mask;
    M is ILU(0) or the diagonal of the masked principal submatrix, or one
    symmetric Gauss-Seidel sweep on it."""

    def __init__(self, A: sp.csr_matrix, mask: np.ndarray, spec: SmootherSpec):
        self.A = A
        self.mask = mask
        self.idx = np.nonzero(mask)[0]
        self.spec = spec
        self.fallback_diag = False
        sub = A[self.idx][:, self.idx].tocsr() if self.idx.size else None
        self.sub = sub
        self.diag = None
        self.ilu = None
        self.diag_pos = None
        if sub is None:
            return
        sub.sort_indices()
        if spec.kind == "richardson-jacobi":
            self.diag = sub.diagonal()
            if np.abs(self.diag).min() <= 0:
                raise SolverError("zero diagonal in Jacobi smoother")
        else:
            data = sub.data.copy()
            diag_pos, status = _kernels.ilu0_factor(sub.indptr, sub.indices, data)
            if status != 0 and spec.kind == "richardson-ilu0":
                import logging
                logging.getLogger(__name__).warning(
                    "zero pivot in ILU(0); falling back to diagonal smoothing")
                self.fallback_diag = True
                self.diag = sub.diagonal()
            else:
                self.ilu = data
                self.diag_pos = diag_pos
            if spec.kind == "sym-gauss-seidel":
                self.diag_pos_gs = self._diag_positions(sub)

    @staticmethod
    def _diag_positions(sub):
        n = sub.shape[0]
        pos = np.empty(n, dtype=np.int64)
        for i in range(n):
            row = sub.indices[sub.indptr[i]:sub.indptr[i + 1]]
            hit = np.nonzero(row == i)[0]
            if hit.size == 0:
                raise SolverError("missing diagonal entry in smoother submatrix")
            pos[i] = sub.indptr[i] + hit[0]
        return pos

    def apply(self, x, b):
        """One smoother application (spec.steps_per_application inner steps)."""
        for _ in range(self.spec.steps_per_application):
            x = self._step(x, b)
        return x

    def _step(self, x, b):
        if self.idx.size == 0:
            return x
        r = b - self.A @ x
        rm = r[self.idx]
        single = rm.ndim == 1
        spec = self.spec
        if spec.kind == "sym-gauss-seidel":
            xm = x[self.idx].copy()
            bm = rm + self.sub @ xm
            if single:
                _kernels.sgs_sweep(self.sub.indptr, self.sub.indices, self.sub.data,
                                   self.diag_pos_gs, xm, bm)
            else:
                _kernels.sgs_sweep_many(self.sub.indptr, self.sub.indices, self.sub.data,
                                        self.diag_pos_gs, xm, np.ascontiguousarray(bm))
            out = x.copy()
            out[self.idx] = xm
            return out
        if spec.kind == "richardson-jacobi" or self.fallback_diag:
            upd = rm / (self.diag if single else self.diag[:, None])
        else:
            if single:
                upd = np.empty_like(rm)
                _kernels.ilu0_solve(self.sub.indptr, self.sub.indices, self.ilu,
                                    self.diag_pos, rm, upd)
            else:
                upd = np.empty_like(rm)
                _kernels.ilu0_solve_many(self.sub.indptr, self.sub.indices, self.ilu,
                                         self.diag_pos, np.ascontiguousarray(rm), upd)
        out = x.copy()
        out[self.idx] = x[self.idx] + spec.omega * upd
        return out


@dataclass
class MgLevel:
    A: sp.csr_matrix
    free: np.ndarray
    nonfree: np.ndarray
    smoother: LevelSmoother
    Qhat: sp.csr_matrix | None = None       # from the next coarser level
    Qhat_full: sp.csr_matrix | None = None
    R: sp.csr_matrix | None = None


class MgHierarchy:
    """Constrained operators, transfers and smoothers for levels 0..J."""

    def __init__(self, levels, coarse_factor, coarse_free, spec, method, mesh, fine_system):
        self.levels = levels
        self.coarse_factor = coarse_factor
        self.coarse_free = coarse_free
        self.spec = spec
        self.method = method
        self.mesh = mesh
        self.fine_system = fine_system

    @property
    def n_levels(self):
        return len(self.levels)

    @property
    def fine(self) -> MgLevel:
        return self.levels[-1]

    def free_dofs(self):
        return np.nonzero(self.fine.free)[0]

    def restrict_rhs(self, f: np.ndarray) -> np.ndarray:
        fhat = self.fine.R @ f
        fhat[self.fine.nonfree] = 0.0
        return fhat

    def apply(self, r):
        """One V-cycle from the finest level."""
        return v_cycle(self, self.n_levels - 1, r)


def _bpwx_mask(level, klass, dirichlet, k):
    created_here = level.created == k
    mask = np.zeros(level.n_nodes, dtype=bool)
    if created_here.any():
        mask[np.unique(level.conn[created_here])] = True
    mask &= klass == INTERIOR
    mask &= ~dirichlet
    return mask


def build_hierarchy(mesh, system: SystemPair, spec: SmootherSpec | None = None,
                    method: str = "global") -> MgHierarchy:
    """Constrain the fine system, Galerkin-coarsen it down the mesh levels,
    factor the coarsest free block, and bind smoothers to their masks."""
    if method not in ("global", "bpwx"):
        raise SolverError(f"unknown smoothing method {method!r}")
    spec = spec or SmootherSpec()
    J = mesh.n_levels - 1
    ops = [constraint_operator(lev) for lev in mesh.levels]
    nonfree = [lev.dirichlet | (lev.klass == HANGING) for lev in mesh.levels]

    fine = mesh.levels[J]
    R_J = ops[J].matrix
    S = strip_nonfree((R_J @ system.matrix @ R_J.T).tocsr(), nonfree[J])
    A_hat = add_unit_diagonal(S, nonfree[J])

    mats = [None] * (J + 1)
    qhats = [None] * (J + 1)
    qfulls = [None] * (J + 1)
    mats[J] = A_hat
    for k in range(J, 0, -1):
        Q = injection_matrix(mesh, k)
        Qh_full = constrained_prolongation(Q, ops[k - 1].matrix)
        left = sp.diags((~nonfree[k]).astype(float))
        right = sp.diags((~nonfree[k - 1]).astype(float))
        Qh = (left @ Qh_full @ right).tocsr()
        Qh.eliminate_zeros()
        qhats[k] = Qh
        qfulls[k] = Qh_full
        mats[k - 1] = galerkin_coarsen(mats[k], Qh, nonfree[k], nonfree[k - 1])

    masks = []
    for k in range(J + 1):
        lev = mesh.levels[k]
        free = ~nonfree[k]
        if method == "bpwx" and k > 0:
            masks.append(_bpwx_mask(lev, lev.klass, lev.dirichlet, k))
        else:
            masks.append(free.copy())
    if method == "bpwx":
        # every free dof must be smoothed on some level or the cycle cannot
        # contract its error; a node that hangs when created and turns into
        # a master later (possible for non-nested marking) is assigned to
        # the first level where it is unconstrained
        covered = np.zeros(mesh.levels[J].n_nodes, dtype=bool)
        for k in range(J + 1):
            covered[: len(masks[k])][masks[k]] = True
        orphans = np.nonzero(~covered & ~nonfree[J])[0]
        for nid in orphans:
            for k in range(J + 1):
                if nid < mesh.levels[k].n_nodes and not nonfree[k][nid]:
                    masks[k][nid] = True
                    break

    levels = []
    for k in range(J + 1):
        free = ~nonfree[k]
        smoother = LevelSmoother(mats[k], masks[k], spec)
        levels.append(MgLevel(A=mats[k], free=free, nonfree=nonfree[k],
                              smoother=smoother, Qhat=qhats[k], Qhat_full=qfulls[k],
                              R=ops[k].matrix))

    cfree = np.nonzero(levels[0].free)[0]
    dense = mats[0][cfree][:, cfree].toarray()
    try:
        factor = sla.cho_factor(dense, lower=True)
    except sla.LinAlgError as exc:
        raise SolverError("singular coarsest-level matrix") from exc
    return MgHierarchy(levels, factor, cfree, spec, method, mesh, system)


def _coarse_solve(h: MgHierarchy, r):
    out = np.zeros_like(r)
    rf = r[h.coarse_free]
    out[h.coarse_free] = sla.cho_solve(h.coarse_factor, rf)
    return out


def v_cycle(h: MgHierarchy, k: int, r):
    """Recursive smooth / restrict / correct / smooth pass returning the
    correction for residual r at level k; zero on hanging and Dirichlet dofs."""
    r = np.asarray(r, dtype=float)
    if k == 0:
        return _coarse_solve(h, r)
    lev = h.levels[k]
    x = np.zeros_like(r)
    for _ in range(h.spec.nu_pre):
        x = lev.smoother.apply(x, r)
    d = r - lev.A @ x
    rc = lev.Qhat.T @ d
    ec = v_cycle(h, k - 1, rc)
    x = x + lev.Qhat @ ec
    for _ in range(h.spec.nu_post):
        x = lev.smoother.apply(x, r)
    return x


def smooth(h: MgHierarchy, k: int, x, b, mask=None):
    """One masked smoothing step at level k; mask defaults to the level's
    configured smoothing set."""
    lev = h.levels[k]
    if mask is None:
        return lev.smoother._step(x, b)
    sm = LevelSmoother(lev.A, np.asarray(mask, dtype=bool), h.spec)
    return sm._step(x, b)


# ---------------------------------------------------------------------------
# reports

@dataclass
class SolveReport:
    method: str
    converged: bool
    iterations: int
    n10: int | None
    rbar: float | None
    wall_time_s: float
    dofs_free: int
    dofs_total: int
    residual_history: list = field(default_factory=list)
    preconditioned_history: list = field(default_factory=list)
    metric_norm: str = "preconditioned"
    flag: str = ""
    update_history: list = field(default_factory=list)

    def to_json(self, **extra) -> str:
        d = {**asdict(self), **extra}
        return json.dumps(d, indent=2)

    CSV_HEADER = "method,converged,iterations,n10,rbar,wall_time_s,dofs_free,dofs_total,flag"

    def to_csv_row(self) -> str:
        n10 = "" if self.n10 is None else self.n10
        rbar = "" if self.rbar is None else f"{self.rbar:.4f}"
        return (f"{self.method},{int(self.converged)},{self.iterations},{n10},{rbar},"
                f"{self.wall_time_s:.4f},{self.dofs_free},{self.dofs_total},{self.flag}")


def _metrics(history):
    """(n10, rbar): first count reaching a 1e10 residual reduction, and the
    average decimal reduction rate over the recorded iterations."""
    if len(history) < 2 or history[0] <= 0:
        return None, None
    r0 = history[0]
    n10 = None
    for n, rn in enumerate(history):
        if n > 0 and rn <= 1e-10 * r0:
            n10 = n
            break
    n = len(history) - 1
    rn = history[-1]
    rbar = float("inf") if rn == 0 else np.log10(r0 / rn) / n
    return n10, rbar


def stationary_solve(h: MgHierarchy, f: np.ndarray | None = None,
                     eps: float = 1e-10, max_it: int = 200) -> tuple:
    """Residual-correction iteration with one V-cycle as the approximate
    inverse; stops when the correction norm drops below eps.

    Returns (u_hat, report).  u_hat is the constrained-space solution vector
    (hanging entries zero); prolong with R.T to evaluate on all nodes.
    """
    fine = h.fine
    A_J = h.fine_system.matrix
    f_J = f if f is not None else h.fine_system.rhs
    R = fine.R
    uhat = np.zeros(A_J.shape[0])
    updates = []
    res_hist = []
    t0 = time.perf_counter()
    converged = False
    it = 0
    for it in range(1, max_it + 1):
        u = R.T @ uhat
        r = f_J - A_J @ u
        rhat = R @ r
        rhat[fine.nonfree] = 0.0
        res_hist.append(float(np.linalg.norm(rhat)))
        what = h.apply(rhat)
        uhat = uhat + what
        upd = float(np.linalg.norm(what))
        updates.append(upd)
        if upd <= eps:
            converged = True
            break
    wall = time.perf_counter() - t0
    n10, rbar = _metrics(res_hist)
    rep = SolveReport(method="stationary-mg", converged=converged, iterations=it,
                      n10=n10, rbar=rbar, wall_time_s=wall,
                      dofs_free=int(fine.free.sum()), dofs_total=fine.A.shape[0],
                      residual_history=res_hist, preconditioned_history=[],
                      metric_norm="euclidean", update_history=updates)
    return uhat, rep


def pcg_solve(h: MgHierarchy, f: np.ndarray | None = None, rtol: float = 1e-10,
              max_it: int = 500) -> tuple:
    """Conjugate gradients on the constrained system, preconditioned with one
    V-cycle.  Histories record both the Euclidean and the preconditioned
    residual norms; n10 and rbar follow the preconditioned one."""
    fine = h.fine
    A = fine.A
    b = h.restrict_rhs(f) if f is not None else h.restrict_rhs(h.fine_system.rhs)
    x = np.zeros_like(b)
    r = b.copy()
    z = h.apply(r)
    p = z.copy()
    rz = float(r @ z)
    t0 = time.perf_counter()
    hist_true = [float(np.linalg.norm(r))]
    hist_prec = [float(np.sqrt(max(rz, 0.0)))]
    flag = ""
    converged = False
    it = 0
    if rz <= 0 and hist_true[0] > 0:
        flag = "breakdown"
    elif hist_true[0] == 0.0 or rtol >= 1.0:
        converged = True
    else:
        for it in range(1, max_it + 1):
            Ap = A @ p
            pAp = float(p @ Ap)
            if pAp <= 0:
                flag = "breakdown"
                break
            alpha = rz / pAp
            x = x + alpha * p
            r = r - alpha * Ap
            z = h.apply(r)
            rz_new = float(r @ z)
            hist_true.append(float(np.linalg.norm(r)))
            hist_prec.append(float(np.sqrt(max(rz_new, 0.0))))
            if rz_new < 0:
                flag = "breakdown"
                break
            if hist_prec[-1] <= rtol * hist_prec[0]:
                converged = True
                break
            p = z + (rz_new / rz) * p
            rz = rz_new
    wall = time.perf_counter() - t0
    n10, rbar = _metrics(hist_prec)
    rep = SolveReport(method="pcg-mg", converged=converged, iterations=it,
                      n10=n10, rbar=rbar, wall_time_s=wall,
                      dofs_free=int(fine.free.sum()), dofs_total=A.shape[0],
                      residual_history=hist_true, preconditioned_history=hist_prec,
                      metric_norm="preconditioned", flag=flag)
    return x, rep


def gmres_solve(h: MgHierarchy, f: np.ndarray | None = None, rtol: float = 1e-10,
                restart: int = 30, max_it: int = 500) -> tuple:
    """Right-preconditioned restarted GMRES; the Givens recurrence tracks the
    true residual norm."""
    fine = h.fine
    A = fine.A
    b = h.restrict_rhs(f) if f is not None else h.restrict_rhs(h.fine_system.rhs)
    n = len(b)
    x = np.zeros(n)
    hist = [float(np.linalg.norm(b))]
    if hist[0] == 0.0:
        rep = SolveReport(method="gmres-mg", converged=True, iterations=0, n10=None,
                          rbar=None, wall_time_s=0.0, dofs_free=int(fine.free.sum()),
                          dofs_total=n, residual_history=hist,
                          metric_norm="euclidean")
        return x, rep
    t0 = time.perf_counter()
    tol_abs = rtol * hist[0]
    total_it = 0
    converged = False
    flag = ""
    while total_it < max_it and not converged:
        r = b - A @ x
        beta = float(np.linalg.norm(r))
        if beta <= tol_abs:
            converged = True
            break
        m = min(restart, max_it - total_it)
        V = np.zeros((n, m + 1))
        Z = np.zeros((n, m))
        H = np.zeros((m + 1, m))
        cs, sn = np.zeros(m), np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[:, 0] = r / beta
        k_used = 0
        for j in range(m):
            Z[:, j] = h.apply(V[:, j])
            w = A @ Z[:, j]
            for i in range(j + 1):
                H[i, j] = float(w @ V[:, i])
                w = w - H[i, j] * V[:, i]
            H[j + 1, j] = float(np.linalg.norm(w))
            if H[j + 1, j] > 1e-300:
                V[:, j + 1] = w / H[j + 1, j]
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = float(np.hypot(H[j, j], H[j + 1, j]))
            if denom <= 1e-300:
                flag = "breakdown"
                k_used = j
                break
            cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            total_it += 1
            k_used = j + 1
            hist.append(abs(float(g[j + 1])))
            if abs(g[j + 1]) <= tol_abs:
                converged = True
                break
        if k_used:
            y = sla.solve_triangular(H[:k_used, :k_used], g[:k_used], lower=False)
            x = x + Z[:, :k_used] @ y
        if flag:
            break
    wall = time.perf_counter() - t0
    n10, rbar = _metrics(hist)
    rep = SolveReport(method="gmres-mg", converged=converged, iterations=total_it,
                      n10=n10, rbar=rbar, wall_time_s=wall,
                      dofs_free=int(fine.free.sum()), dofs_total=n,
                      residual_history=hist, metric_norm="euclidean", flag=flag)
    return x, rep


def solution_on_nodes(h: MgHierarchy, uhat: np.ndarray) -> np.ndarray:
    """Fill hanging entries from their masters: the nodal field of the
    constrained solution."""
    return h.fine.R.T @ uhat


# ---------------------------------------------------------------------------
# config files

CONFIG_KEYS = {
    "strategy": str, "levels": int, "family": str, "smoother": str,
    "omega": float, "nu_pre": int, "nu_post": int, "rtol": float,
    "eps": float, "seed": int, "method": str, "fraction": float,
}


def parse_config_text(text: str) -> dict:
    """key = value lines; '#' starts a comment; unknown keys are rejected."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SolverError(f"config line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise SolverError(
                f"config line {lineno}: unknown key {key!r} "
                f"(valid: {', '.join(sorted(CONFIG_KEYS))})")
        try:
            out[key] = CONFIG_KEYS[key](val)
        except ValueError:
            raise SolverError(f"config line {lineno}: bad value for {key!r}")
    return out
