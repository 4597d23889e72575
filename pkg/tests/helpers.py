"""Independent evaluators used as oracles in the tests."""
import itertools

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from eddyieti.spline_core import collocation


def field_at(space, coeffs, x, y, z):
    """Point values of a discrete curl-space field, shape (3, n)."""
    x, y, z = (np.atleast_1d(np.asarray(v, dtype=float)).ravel() for v in (x, y, z))
    out = np.zeros((3, len(x)))
    for a in range(3):
        C = space.component_tensor(coeffs, a)
        fx, fy, fz = (collocation(space.factor(a, d), v) for d, v in enumerate((x, y, z)))
        out[a] = np.einsum("kji,iq,jq,kq->q", C, fx, fy, fz)
    return out


def grid_sampler(spaces, coeffs, locate):
    """Sampler ``f(x, y, z, t)`` of a (multi)patch discrete field.

    ``locate(x, y, z)`` returns the patch index holding the given point.
    """

    def f(x, y, z, t):
        x, y, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, z)))
        flat = [v.ravel() for v in (x, y, z)]
        out = np.zeros((3, flat[0].size))
        owner = np.array([locate(a, b, c) for a, b, c in zip(*flat)])
        for s in np.unique(owner):
            m = owner == s
            out[:, m] = field_at(spaces[s], coeffs[s], flat[0][m], flat[1][m], flat[2][m])
        return out.reshape((3,) + x.shape)

    return f


def brute_force_curl_basis(space, x, y, z):
    """Curl of every basis function at the points, shape (n_dofs, 3, n)."""
    pts = (np.asarray(x, float), np.asarray(y, float), np.asarray(z, float))
    out = np.zeros((space.n_dofs, 3, len(pts[0])))
    for a in range(3):
        vals = [collocation(space.factor(a, d), pts[d], 0) for d in range(3)]
        ders = [collocation(space.factor(a, d), pts[d], 1) for d in range(3)]
        nx, ny, nz = space.component_shapes[a]
        for k in range(nz):
            for j in range(ny):
                for i in range(nx):
                    idx = (i, j, k)
                    grad = []
                    for d in range(3):
                        g = np.ones(len(pts[0]))
                        for e in range(3):
                            g = g * (ders[e][idx[e]] if e == d else vals[e][idx[e]])
                        grad.append(g)
                    # curl(phi e_a) = grad(phi) x e_a
                    e_a = np.zeros(3)
                    e_a[a] = 1.0
                    c = np.cross(np.stack(grad, axis=1), e_a).T
                    out[space.dof_index(a, i, j, k)] = c
    return out


def tensor_gauss(space, q):
    """Tensor Gauss points and weights on every element of a patch."""
    xs, ws = [], []
    g, w = np.polynomial.legendre.leggauss(q)
    for kv in space.kvs:
        bp = kv.breakpoints
        lo, hi = bp[:-1, None], bp[1:, None]
        xs.append((0.5 * (lo + hi) + 0.5 * (hi - lo) * g).ravel())
        ws.append((0.5 * (hi - lo) * w).ravel())
    X, Y, Z = np.meshgrid(*xs, indexing="ij")
    W = np.einsum("i,j,k->ijk", *ws)
    return X.ravel(), Y.ravel(), Z.ravel(), W.ravel()


def n_components(n_vertices, edges):
    edges = np.asarray(edges, dtype=int).reshape(-1, 2)
    A = sp.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n_vertices, n_vertices))
    return connected_components(A, directed=False)[0]


def trace_grid_tree_range():
    """Min/max number of center edges over all spanning trees of the 3x3 grid."""
    idx = lambda i, j: i + 3 * j  # noqa: E731
    edges = [(idx(i, j), idx(i + 1, j)) for j in range(3) for i in range(2)]
    edges += [(idx(i, j), idx(i, j + 1)) for j in range(2) for i in range(3)]
    center = [k for k, e in enumerate(edges) if 4 in e]
    counts = set()
    for combo in itertools.combinations(range(len(edges)), 8):
        if n_components(9, [edges[k] for k in combo]) == 1:
            counts.add(sum(k in center for k in combo))
    return min(counts), max(counts), len(center)
