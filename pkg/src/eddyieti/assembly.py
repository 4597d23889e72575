"""Patch-wise assembly of curl-curl stiffness, mass, loads and error integrals.

Geometry is the identity on axis-aligned boxes, so every bilinear form is a
short sum of Kronecker products of 1D Gram matrices.  Field samplers are
callables ``f(x, y, z, t) -> (3, *x.shape)`` evaluated on tensor grids.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConstructionError, InputError
from .spline_core import CurlSpace, collocation, element_quadrature, greville
from .topology import DofClass, DofKind

__all__ = [
    "CURL_TERMS",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_load",
    "dirichlet_values",
    "project_initial",
    "l2_error",
    "l2_error_curl",
    "assemble_curl_load",
    "evaluate_field",
    "evaluate_curl",
    "glued_matrix",
]

# curl(phi e_a) = sum over (curl component, sign, derivative direction)
CURL_TERMS = {
    0: ((1, +1, 2), (2, -1, 1)),
    1: ((0, -1, 2), (2, +1, 0)),
    2: ((0, +1, 1), (1, -1, 0)),
}


def _kron3(mx, my, mz) -> sp.csr_matrix:
    # x fastest, z slowest
    return sp.kron(sp.csr_matrix(mz), sp.kron(sp.csr_matrix(my), sp.csr_matrix(mx)), format="csr")


@dataclass(frozen=True, eq=False)
class _Tables:
    """Collocation of all 1D factors at the quadrature points of one patch."""

    points: tuple  # per direction
    weights: tuple
    values: dict  # (direction, "N"|"M", deriv) -> (dim, n_points)


def _tables(space: CurlSpace, nq: int) -> _Tables:
    return _cached_tables(space, nq)


@lru_cache(maxsize=256)
def _cached_tables(space: CurlSpace, nq: int) -> _Tables:
    pts, wts, vals = [], [], {}
    for d in range(3):
        x, w = element_quadrature(space.kvs[d], nq)
        pts.append(x)
        wts.append(w)
        vals[(d, "N", 0)] = collocation(space.kvs[d], x, 0)
        vals[(d, "N", 1)] = collocation(space.kvs[d], x, 1)
        vals[(d, "M", 0)] = collocation(space.dkvs[d], x, 0)
    return _Tables(tuple(pts), tuple(wts), vals)


def _factor_key(a: int, d: int, deriv_dir: int | None):
    return (d, "M" if d == a else "N", 1 if d == deriv_dir else 0)


def _gram(tab: _Tables, key_test, key_trial) -> np.ndarray:
    d = key_test[0]
    return (tab.values[key_test] * tab.weights[d]) @ tab.values[key_trial].T


def _default_nq(space: CurlSpace) -> int:
    return space.degree + 1


def assemble_stiffness(space: CurlSpace, nu: float = 1.0, nq: int | None = None) -> sp.csr_matrix:
    """Curl-curl stiffness ``(nu curl w_k, curl w_j)`` on one patch."""
    if nu <= 0:
        raise InputError("reluctivity must be positive")
    tab = _tables(space, nq or _default_nq(space))
    blocks = [[None] * 3 for _ in range(3)]
    for a in range(3):
        for b in range(a, 3):
            acc = None
            for ca, sa, da in CURL_TERMS[a]:
                for cb, sb, db in CURL_TERMS[b]:
                    if ca != cb:
                        continue
                    mats = [_gram(tab, _factor_key(a, d, da), _factor_key(b, d, db)) for d in range(3)]
                    term = (sa * sb) * _kron3(*mats)
                    acc = term if acc is None else acc + term
            blocks[a][b] = acc
            if b != a:
                blocks[b][a] = acc.T
    K = nu * sp.bmat(blocks, format="csr")
    K = (K + K.T) * 0.5
    K.eliminate_zeros()
    return K.tocsr()


def assemble_mass(space: CurlSpace, sigma: float = 1.0, nq: int | None = None, region=None) -> sp.csr_matrix:
    """Vector mass ``(sigma w_k, w_j)``.  ``region`` guards against insulators."""
    from .topology import Region

    if region is not None and region is not Region.CONDUCTOR:
        raise InputError("conductivity mass requested on an insulator subdomain")
    if sigma <= 0:
        raise InputError("conductivity must be positive")
    tab = _tables(space, nq or _default_nq(space))
    blocks = []
    for a in range(3):
        mats = [_gram(tab, _factor_key(a, d, None), _factor_key(a, d, None)) for d in range(3)]
        blocks.append(_kron3(*mats))
    M = sigma * sp.block_diag(blocks, format="csr")
    M = (M + M.T) * 0.5
    M.eliminate_zeros()
    return M.tocsr()


def _grid(tab: _Tables):
    # arrays of shape (Qz, Qy, Qx)
    z, y, x = np.meshgrid(tab.points[2], tab.points[1], tab.points[0], indexing="ij")
    return x, y, z


def _contract(fz, fy, fx, values) -> np.ndarray:
    """sum_{c,b,a} fz[k,c] fy[j,b] fx[i,a] values[c,b,a] -> (k, j, i)."""
    out = np.tensordot(values, fx, axes=([2], [1]))  # (c, b, i)
    out = np.tensordot(out, fy, axes=([1], [1]))  # (c, i, j)
    out = np.tensordot(out, fz, axes=([0], [1]))  # (i, j, k)
    return out.transpose(2, 1, 0)


def assemble_load(space: CurlSpace, J, t: float, nq: int | None = None) -> np.ndarray:
    """Load vector ``(J(t), w_j)``.

    The default rule uses p+3 Gauss points per element; see the README for
    why loads get two more points than the matrices.
    """
    tab = _tables(space, nq or space.degree + 3)
    x, y, z = _grid(tab)
    vals = np.asarray(J(x, y, z, t), dtype=float)
    out = np.empty(space.n_dofs)
    wz, wy, wx = tab.weights[2], tab.weights[1], tab.weights[0]
    for a in range(3):
        fx = tab.values[_factor_key(a, 0, None)] * wx
        fy = tab.values[_factor_key(a, 1, None)] * wy
        fz = tab.values[_factor_key(a, 2, None)] * wz
        out[space.offsets[a] : space.offsets[a + 1]] = _contract(fz, fy, fx, vals[a]).ravel()
    return out


def assemble_curl_load(space: CurlSpace, F, t: float, nq: int | None = None) -> np.ndarray:
    """Load vector ``(F(t), curl w_j)``; same quadrature default as loads."""
    tab = _tables(space, nq or space.degree + 3)
    x, y, z = _grid(tab)
    vals = np.asarray(F(x, y, z, t), dtype=float)
    out = np.zeros(space.n_dofs)
    wts = [tab.weights[d] for d in range(3)]
    for a in range(3):
        acc = 0.0
        for c, s, dd in CURL_TERMS[a]:
            fx, fy, fz = (tab.values[_factor_key(a, d, dd)] * wts[d] for d in range(3))
            acc = acc + s * _contract(fz, fy, fx, vals[c])
        out[space.offsets[a] : space.offsets[a + 1]] = np.ravel(acc)
    return out


def evaluate_field(space: CurlSpace, coeffs, nq: int | None = None) -> np.ndarray:
    """Field values on the quadrature grid, shape ``(3, Qz, Qy, Qx)``."""
    tab = _tables(space, nq or _default_nq(space))
    out = []
    for a in range(3):
        C = space.component_tensor(coeffs, a)
        fx, fy, fz = (tab.values[_factor_key(a, d, None)].T for d in range(3))
        # swap roles: evaluate basis at points
        out.append(_contract(fz, fy, fx, C))
    return np.stack(out)


def evaluate_curl(space: CurlSpace, coeffs, nq: int | None = None) -> np.ndarray:
    """Curl of the discrete field on the quadrature grid, ``(3, Qz, Qy, Qx)``."""
    tab = _tables(space, nq or _default_nq(space))
    shape = tuple(len(tab.points[d]) for d in (2, 1, 0))
    out = np.zeros((3,) + shape)
    for a in range(3):
        C = space.component_tensor(coeffs, a)
        for c, s, dd in CURL_TERMS[a]:
            fx, fy, fz = (tab.values[_factor_key(a, d, dd)].T for d in range(3))
            out[c] += s * _contract(fz, fy, fx, C)
    return out


def _weights3(tab: _Tables) -> np.ndarray:
    return tab.weights[2][:, None, None] * tab.weights[1][None, :, None] * tab.weights[0][None, None, :]


def l2_error_sq(space, coeffs, exact, t, nq=None, curl=False) -> float:
    """Squared L2 distance between the discrete field (or its curl) and ``exact``."""
    nq = nq or _default_nq(space)
    tab = _tables(space, nq)
    vals = evaluate_curl(space, coeffs, nq) if curl else evaluate_field(space, coeffs, nq)
    if exact is not None:
        x, y, z = _grid(tab)
        vals = vals - np.asarray(exact(x, y, z, t), dtype=float)
    return float(np.sum(_weights3(tab) * np.sum(vals * vals, axis=0)))


def l2_error(spaces, coeffs, exact, t: float = 0.0, nq: int | None = None) -> float:
    """L2 norm of ``u_h - exact`` over one or several patches."""
    if isinstance(spaces, CurlSpace):
        spaces, coeffs = [spaces], [coeffs]
    return float(np.sqrt(sum(l2_error_sq(s, c, exact, t, nq) for s, c in zip(spaces, coeffs))))


def l2_error_curl(spaces, coeffs, exact, t: float = 0.0, nq: int | None = None) -> float:
    """L2 norm of ``curl u_h - exact`` over one or several patches."""
    if isinstance(spaces, CurlSpace):
        spaces, coeffs = [spaces], [coeffs]
    return float(np.sqrt(sum(l2_error_sq(s, c, exact, t, nq, curl=True) for s, c in zip(spaces, coeffs))))


class _FaceInterpolant:
    """Tensor interpolation of one tangential trace component on one face."""

    def __init__(self, space: CurlSpace, axis: int, side: int, a: int):
        self.axis, self.a = axis, a
        self.coord = space.box[axis][side]
        self.dirs = tuple(d for d in range(3) if d != axis)
        self.nodes, self.lu = [], []
        for d in self.dirs:
            kv = space.factor(a, d)
            g = greville(kv)
            self.nodes.append(g)
            self.lu.append(sla.lu_factor(collocation(kv, g).T))
        layer = 0 if side == 0 else space.kvs[axis].dim - 1
        shape = space.component_shapes[a]
        n1, n2 = (shape[d] for d in self.dirs)
        j2, j1 = np.meshgrid(np.arange(n2), np.arange(n1), indexing="ij")
        idx = [None, None, None]
        idx[axis] = np.full_like(j1, layer)
        idx[self.dirs[0]] = j1
        idx[self.dirs[1]] = j2
        self.dofs = space.dof_index(a, idx[0], idx[1], idx[2]).ravel()

    def __call__(self, g, t):
        u, v = self.nodes
        V, U = np.meshgrid(v, u, indexing="ij")  # (n2, n1)
        coords = [None, None, None]
        coords[self.axis] = np.full_like(U, self.coord)
        coords[self.dirs[0]] = U
        coords[self.dirs[1]] = V
        vals = np.asarray(g(coords[0], coords[1], coords[2], t), dtype=float)[self.a]
        # vals = C2 X C1^T with C[g, j] = basis_j(node_g)
        X = sla.lu_solve(self.lu[1], vals)
        X = sla.lu_solve(self.lu[0], X.T).T
        return X.ravel()


class DirichletInterpolator:
    """Cached face interpolants for every domain-boundary face of a patch."""

    def __init__(self, space: CurlSpace, domain):
        self.space = space
        self.faces = []
        for axis in range(3):
            for side in (0, 1):
                if space.box[axis][side] != domain[axis][side]:
                    continue
                for a in range(3):
                    if a != axis:
                        self.faces.append(_FaceInterpolant(space, axis, side, a))
        dofs = np.concatenate([f.dofs for f in self.faces]) if self.faces else np.empty(0, int)
        self.dofs = np.unique(dofs)

    def __call__(self, g, t) -> np.ndarray:
        """Full-length local vector; entries outside the boundary DOFs are zero."""
        out = np.zeros(self.space.n_dofs)
        for face in self.faces:
            out[face.dofs] = face(g, t)
        return out


def dirichlet_values(space: CurlSpace, classes: DofClass, s: int, g, t: float, domain=None):
    """Coefficients of the DIRICHLET DOFs of subdomain ``s``.

    Returns ``(local indices, values)``.
    """
    if domain is None:
        domain = space.box
    interp = DirichletInterpolator(space, domain)
    idx = np.flatnonzero(classes.local_kind(s) == DofKind.DIRICHLET)
    if not np.array_equal(idx, interp.dofs):
        raise ConstructionError("face interpolation does not cover the Dirichlet DOFs")
    return idx, interp(g, t)[idx]


def glued_matrix(mats, local_to_global, n_global) -> sp.csr_matrix:
    """Sum patch matrices into the glued numbering."""
    rows, cols, vals = [], [], []
    for A, l2g in zip(mats, local_to_global):
        A = A.tocoo()
        rows.append(l2g[A.row])
        cols.append(l2g[A.col])
        vals.append(A.data)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_global, n_global)
    )


def project_initial(spaces, classes: DofClass, A0, nq: int | None = None):
    """Global L2 projection of ``A0`` onto the glued multipatch space.

    Returns the per-subdomain local coefficient vectors.
    """
    n = classes.n_edges
    masses = [assemble_mass(s, 1.0, nq) for s in spaces]
    M = glued_matrix(masses, classes.local_to_global, n)
    rhs = np.zeros(n)
    for space, l2g in zip(spaces, classes.local_to_global):
        np.add.at(rhs, l2g, assemble_load(space, A0, 0.0))
    if not np.any(rhs):
        a = np.zeros(n)
    else:
        a = spla.spsolve(M.tocsc(), rhs)
    if not np.all(np.isfinite(a)):
        raise ConstructionError("singular mass in initial projection")
    return [a[l2g].copy() for l2g in classes.local_to_global]
