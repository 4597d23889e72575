"""Dual-primal tearing and interconnecting solve of one implicit Euler step.

Per subdomain ``s`` the step matrix ``W_s = M_s + dt K_s`` is split by the
partition into remaining (r), primal (p) and eliminated (e) blocks.  With
``Wtilde`` the primal-assembled block system of the (r, p) unknowns, the
multipliers solve ``F m = d`` with

    F m = dt^2 B_rr [Wtilde^{-1} (B_rr^T m, 0)]_r,
    d   = dt   B_rr [Wtilde^{-1} (g_r, g_p)]_r,

by PCG with the unscaled Dirichlet preconditioner.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, InputError, NonsingularityError
from .gauge import CouplingMatrices, DofPartition

log = logging.getLogger(__name__)

__all__ = [
    "SolveStats",
    "StepSystem",
    "LocalFactor",
    "build_step_system",
    "pcg",
    "solve_step",
    "monolithic_solve",
    "euler_residual",
]


@dataclass
class SolveStats:
    iterations: int = 0
    residual: float = 0.0
    recovery_residual: float = 0.0
    history: list = field(default_factory=list)


@dataclass
class OperationCounter:
    factorizations: int = 0
    local_solves: int = 0
    coarse_solves: int = 0


class LocalFactor:
    """Sparse LU with symmetric pivoting, usable as a Cholesky surrogate.

    With a symmetric permutation and no off-diagonal pivoting all pivots of
    a symmetric positive definite matrix are positive; a non-positive pivot
    is reported as a nonsingularity violation.
    """

    def __init__(self, A: sp.spmatrix, counter: OperationCounter | None = None, name: str = ""):
        self.n = A.shape[0]
        self.counter = counter
        if counter is not None:
            counter.factorizations += 1
        if self.n == 0:
            self.lu = None
            self.min_pivot = np.inf
            return
        try:
            self.lu = spla.splu(
                sp.csc_matrix(A),
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options=dict(SymmetricMode=True),
            )
        except RuntimeError as exc:
            raise NonsingularityError(f"factorization of {name} failed: {exc}") from exc
        piv = self.lu.U.diagonal()
        self.min_pivot = float(piv.min())
        if not np.all(piv > 0):
            raise NonsingularityError(f"{name} has a non-positive pivot {self.min_pivot:.3e}")

    def solve(self, b):
        if self.counter is not None:
            self.counter.local_solves += 1
        if self.n == 0:
            return np.zeros_like(b)
        return self.lu.solve(np.asarray(b, dtype=float))


def _sub(A, rows, cols):
    return A[rows][:, cols].tocsr()


@dataclass(eq=False)
class _Local:
    W: sp.csr_matrix
    W_rr: sp.csr_matrix
    W_rp: sp.csr_matrix
    W_pp: sp.csr_matrix
    W_re: sp.csr_matrix
    W_pe: sp.csr_matrix
    factor: LocalFactor
    C: np.ndarray  # W_rp N_s, dense (n_r, n_primal)
    Phi: np.ndarray  # W_rr^{-1} C
    B: sp.csr_matrix  # B_rr block
    N: sp.csr_matrix
    b: np.ndarray  # positions in R carrying a jump constraint
    i: np.ndarray
    W_bb: sp.csr_matrix
    W_bi: sp.csr_matrix
    W_ii_factor: LocalFactor
    B_b: sp.csr_matrix


class StepSystem:
    """Factorized per-step operators for a fixed time step ``dt``."""

    def __init__(self, K, M, partition: DofPartition, coupling: CouplingMatrices, dt: float):
        if dt <= 0:
            raise InputError("time step must be positive")
        self.dt = float(dt)
        self.partition = partition
        self.coupling = coupling
        self.counter = OperationCounter()
        self.n_primal = partition.n_primal
        self.m = coupling.m_r
        self.locals = []
        S = np.zeros((self.n_primal, self.n_primal))
        for s in range(partition.n_subdomains):
            W = dt * K[s]
            if M[s] is not None:
                W = W + M[s]
            W = W.tocsr()
            R, P, E = partition.R[s], partition.P[s], partition.E[s]
            W_rr = _sub(W, R, R)
            W_rp = _sub(W, R, P)
            W_pp = _sub(W, P, P)
            factor = LocalFactor(W_rr, self.counter, f"W_rr[{s}]")
            N = coupling.N[s]
            C = np.asarray((W_rp @ N).todense()) if self.n_primal else np.zeros((len(R), 0))
            Phi = np.column_stack([factor.solve(C[:, k]) for k in range(C.shape[1])]) if C.shape[1] else C
            if self.n_primal:
                S += (N.T @ W_pp @ N).toarray() - C.T @ Phi
            B = coupling.B_rr[s]
            b = np.flatnonzero(np.diff(B.tocsc().indptr))
            i = np.setdiff1d(np.arange(len(R)), b)
            W_ii_factor = LocalFactor(_sub(W_rr, i, i), self.counter, f"W_ii[{s}]")
            self.locals.append(
                _Local(
                    W, W_rr, W_rp, W_pp, _sub(W, R, E), _sub(W, P, E), factor, C, Phi, B, N,
                    b, i, _sub(W_rr, b, b), _sub(W_rr, b, i), W_ii_factor, B.tocsc()[:, b].tocsr(),
                )
            )
        self.S_pp = 0.5 * (S + S.T)
        self.coarse = None
        if self.n_primal:
            self.counter.factorizations += 1
            try:
                self.coarse = sla.cho_factor(self.S_pp)
            except np.linalg.LinAlgError as exc:
                raise NonsingularityError("coarse primal Schur complement is not positive definite") from exc

    @property
    def min_local_pivot(self) -> float:
        return min(loc.factor.min_pivot for loc in self.locals)

    # --- primal-assembled block solve -------------------------------------------------

    def apply_Wtilde_inverse(self, rhs_r, rhs_p=None):
        """Solve the (r, p) block system; returns (list of x_r, p)."""
        x1 = [loc.factor.solve(r) for loc, r in zip(self.locals, rhs_r)]
        if not self.n_primal:
            return x1, np.zeros(0)
        g = np.zeros(self.n_primal) if rhs_p is None else np.array(rhs_p, dtype=float)
        for loc, x in zip(self.locals, x1):
            g -= loc.C.T @ x
        self.counter.coarse_solves += 1
        p = sla.cho_solve(self.coarse, g)
        return [x - loc.Phi @ p for loc, x in zip(self.locals, x1)], p

    def dual_apply(self, m):
        m = np.asarray(m, dtype=float)
        xr, _ = self.apply_Wtilde_inverse([loc.B.T @ m for loc in self.locals])
        out = np.zeros(self.m)
        for loc, x in zip(self.locals, xr):
            out += loc.B @ x
        return self.dt**2 * out

    def dirichlet_preconditioner(self, r):
        """Unscaled Dirichlet preconditioner; the constant 1/dt^2 is dropped."""
        r = np.asarray(r, dtype=float)
        out = np.zeros(self.m)
        for loc in self.locals:
            v = loc.B_b.T @ r
            if len(loc.i):
                w = loc.W_bb @ v - loc.W_bi @ loc.W_ii_factor.solve(loc.W_bi.T @ v)
            else:
                w = loc.W_bb @ v
            out += loc.B_b @ w
        return out

    def dense_dual(self) -> np.ndarray:
        return np.column_stack([self.dual_apply(e) for e in np.eye(self.m)]) if self.m else np.zeros((0, 0))


def build_step_system(K, M, partition: DofPartition, coupling: CouplingMatrices, dt: float) -> StepSystem:
    return StepSystem(K, M, partition, coupling, dt)


def pcg(apply_A, apply_M, rhs, tol: float = 1e-6, max_iter: int = 500):
    """Preconditioned CG from a zero initial guess.

    Stops once ``|M^{-1} r_k| <= tol |M^{-1} r_0|``.
    """
    b = np.asarray(rhs, dtype=float)
    x = np.zeros_like(b)
    stats = SolveStats()
    if b.size == 0 or not np.any(b):
        return x, stats
    r = b.copy()
    z = apply_M(r)
    z0 = np.linalg.norm(z)
    if z0 == 0.0:
        return x, stats
    p = z.copy()
    rz = r @ z
    for k in range(1, max_iter + 1):
        q = apply_A(p)
        alpha = rz / (p @ q)
        x += alpha * p
        r -= alpha * q
        z = apply_M(r)
        rel = np.linalg.norm(z) / z0
        stats.iterations = k
        stats.residual = float(rel)
        stats.history.append(float(rel))
        if rel <= tol:
            return x, stats
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"PCG did not reach {tol:g} in {max_iter} iterations", stats)


def _homogenized_rhs(system: StepSystem, f, a_e):
    g_r, g_p = [], np.zeros(system.n_primal)
    part = system.partition
    for s, loc in enumerate(system.locals):
        g_r.append(f[s][part.R[s]] - loc.W_re @ a_e[s])
        if system.n_primal:
            g_p += loc.N.T @ (f[s][part.P[s]] - loc.W_pe @ a_e[s])
    return g_r, g_p


def solve_step(system: StepSystem, f, a_e, tol: float = 1e-6, max_iter: int = 500):
    """One implicit Euler step.

    ``f[s]`` is the full local right-hand side ``M a^(l) + dt j^(l+1)``,
    ``a_e[s]`` the values of the eliminated DOFs in ``E[s]`` order.
    Returns ``(a, p, m, stats)`` with ``a`` the full local coefficient vectors.
    """
    part = system.partition
    dt = system.dt
    g_r, g_p = _homogenized_rhs(system, f, a_e)
    y, _ = system.apply_Wtilde_inverse(g_r, g_p)
    d = np.zeros(system.m)
    for loc, x in zip(system.locals, y):
        d += loc.B @ x
    d *= dt
    m, stats = pcg(system.dual_apply, system.dirichlet_preconditioner, d, tol, max_iter)
    rhs_r = [gr - dt * (loc.B.T @ m) for loc, gr in zip(system.locals, g_r)]
    a_r, p = system.apply_Wtilde_inverse(rhs_r, g_p)

    # residual of the full reformulated block system
    num = 0.0
    den = sum(float(gr @ gr) for gr in g_r) + float(g_p @ g_p)
    res_p = -g_p.copy()
    jump = np.zeros(system.m)
    for loc, ar, gr in zip(system.locals, a_r, g_r):
        rr = loc.W_rr @ ar - gr + dt * (loc.B.T @ m)
        if system.n_primal:
            rr += loc.C @ p
            res_p += loc.C.T @ ar + (loc.N.T @ (loc.W_pp @ (loc.N @ p)))
        num += float(rr @ rr)
        jump += loc.B @ ar
    num += float(res_p @ res_p) + float((dt * jump) @ (dt * jump))
    stats.recovery_residual = float(np.sqrt(num / den)) if den > 0 else float(np.sqrt(num))

    a = []
    for s, loc in enumerate(system.locals):
        full = np.zeros(loc.W.shape[0])
        full[part.E[s]] = a_e[s]
        full[part.R[s]] = a_r[s]
        if system.n_primal:
            full[part.P[s]] = loc.N @ p
        a.append(full)
    return a, p, m, stats


def euler_residual(system: StepSystem, a, m, f) -> float:
    """Relative residual of the non-eliminated momentum rows of the Euler system.

    Primal rows are summed over their group, which removes the primal
    multipliers (``B_pp N = 0``).
    """
    part = system.partition
    dt = system.dt
    num, den = 0.0, 0.0
    res_p = np.zeros(system.n_primal)
    rhs_p = np.zeros(system.n_primal)
    for s, loc in enumerate(system.locals):
        full = loc.W @ a[s] - f[s]
        rr = full[part.R[s]] + dt * (loc.B.T @ m)
        num += float(rr @ rr)
        den += float(f[s][part.R[s]] @ f[s][part.R[s]])
        if system.n_primal:
            res_p += loc.N.T @ full[part.P[s]]
            rhs_p += loc.N.T @ f[s][part.P[s]]
    num += float(res_p @ res_p)
    den += float(rhs_p @ rhs_p)
    return float(np.sqrt(num / den)) if den > 0 else float(np.sqrt(num))


def interface_jump(system: StepSystem, a) -> float:
    """Largest mismatch over coupled remaining DOF pairs."""
    part = system.partition
    jump = np.zeros(system.m)
    for s, loc in enumerate(system.locals):
        jump += loc.B @ a[s][part.R[s]]
    return float(np.abs(jump).max()) if system.m else 0.0


def monolithic_solve(K, M, partition: DofPartition, classes, grid, dt: float, f, a_e):
    """Direct solve of the saddle system with every interface constraint kept.

    Eliminated DOFs are removed exactly as on the dual-primal path; primal
    DOFs stay local and are coupled by multipliers like all other interface
    DOFs.  Returns ``(a, m, system_matrix, constraint_matrix)``.
    """
    from .gauge import _jump_matrix, _jump_rows
    from .topology import DofKind

    n_sub = partition.n_subdomains
    free = [np.sort(np.concatenate([partition.R[s], partition.P[s]])) for s in range(n_sub)]
    kept = ~partition.tree_mask
    kept[partition.primal_groups] = True  # eliminated tree edges carry equal values already
    iface = np.flatnonzero(np.isin(classes.edge_kind, (DofKind.FACE, DofKind.WIREBASKET)) & kept)
    rows = _jump_rows(iface, classes, grid)
    Bs = _jump_matrix(rows, free, classes, n_sub)
    W_ff, rhs = [], []
    for s in range(n_sub):
        W = dt * K[s]
        if M[s] is not None:
            W = W + M[s]
        W = W.tocsr()
        W_ff.append(_sub(W, free[s], free[s]))
        rhs.append(f[s][free[s]] - _sub(W, free[s], partition.E[s]) @ a_e[s])
    A = sp.block_diag(W_ff, format="csr")
    B = sp.hstack(Bs, format="csr")
    S = sp.bmat([[A, dt * B.T], [dt * B, None]], format="csc")
    b = np.concatenate(rhs + [np.zeros(B.shape[0])])
    sol = spla.spsolve(S, b)
    if not np.all(np.isfinite(sol)):
        raise NonsingularityError("monolithic saddle system is singular")
    a, off = [], 0
    for s in range(n_sub):
        full = np.zeros(K[s].shape[0])
        full[partition.E[s]] = a_e[s]
        full[free[s]] = sol[off : off + len(free[s])]
        off += len(free[s])
        a.append(full)
    return a, sol[off:], S, B
