"""Univariate B-splines, Gauss rules and curl-conforming tensor-product spaces.

Scalar spaces carry the usual partition-of-unity normalization.  The
degree-(p-1) factors used by the curl-conforming components carry the
unit-integral (Curry-Schoenberg) scaling, so that for ``f = sum c_i N_i``

    f' = sum_j (c_{j+1} - c_j) M_j,

and the discrete gradient becomes a signed edge-vertex incidence matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import InputError

__all__ = [
    "KnotVector",
    "Quadrature1D",
    "CurlSpace",
    "make_spline_space",
    "eval_basis",
    "derivative_space",
    "gauss_rule",
    "collocation",
    "greville",
    "build_curl_space",
    "discrete_gradient",
    "difference_matrix",
]


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Open knot vector of a given degree.

    ``normalized`` switches on the unit-integral scaling of every basis
    function, ``(p+1)/(t_{j+p+1}-t_j) * N_j``.
    """

    degree: int
    knots: np.ndarray
    normalized: bool = False

    @property
    def dim(self) -> int:
        return len(self.knots) - self.degree - 1

    @cached_property
    def breakpoints(self) -> np.ndarray:
        return np.unique(self.knots)

    @property
    def n_el(self) -> int:
        return len(self.breakpoints) - 1

    @property
    def support(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @cached_property
    def scaling(self) -> np.ndarray:
        p = self.degree
        if not self.normalized:
            return np.ones(self.dim)
        t = self.knots
        return np.array([(p + 1) / (t[j + p + 1] - t[j]) for j in range(self.dim)])

    def find_span(self, x: float) -> int:
        t, p = self.knots, self.degree
        if x >= t[-1]:
            return self.dim - 1
        return int(np.searchsorted(t, x, side="right") - 1)

    def __eq__(self, other):
        if not isinstance(other, KnotVector):
            return NotImplemented
        return (
            self.degree == other.degree
            and self.normalized == other.normalized
            and np.array_equal(self.knots, other.knots)
        )

    def __hash__(self):
        return hash((self.degree, self.normalized, self.knots.tobytes()))


@dataclass(frozen=True, eq=False)
class Quadrature1D:
    points: np.ndarray
    weights: np.ndarray


def make_spline_space(p: int, n_el: int, interval=(0.0, 1.0)) -> KnotVector:
    """Open uniform knot vector with ``n_el`` elements on ``interval``."""
    a, b = float(interval[0]), float(interval[1])
    if p < 1:
        raise InputError(f"degree must be >= 1, got {p}")
    if n_el < 1:
        raise InputError(f"number of elements must be >= 1, got {n_el}")
    if not a < b:
        raise InputError(f"interval must satisfy a < b, got ({a}, {b})")
    inner = np.linspace(a, b, n_el + 1)
    knots = np.concatenate([np.full(p, a), inner, np.full(p, b)])
    return KnotVector(p, knots)


def derivative_space(kv: KnotVector) -> KnotVector:
    """Degree p-1 space on the same breakpoints, unit-integral scaled."""
    if kv.degree < 1:
        raise InputError("derivative space needs degree >= 1")
    return KnotVector(kv.degree - 1, kv.knots[1:-1].copy(), normalized=True)


def eval_basis(kv: KnotVector, x: float, max_deriv: int = 0):
    """Evaluate the ``degree+1`` active basis functions and derivatives at ``x``.

    Returns ``(first, table)`` where ``table[k, r]`` is the k-th derivative of
    basis function ``first + r``.
    """
    p, t = kv.degree, kv.knots
    a, b = kv.support
    if not a <= x <= b:
        raise InputError(f"x={x} outside [{a}, {b}]")
    if max_deriv < 0 or max_deriv > max(p, 0):
        if not (p == 0 and max_deriv == 0):
            raise InputError(f"max_deriv must be in [0, {p}]")
    span = kv.find_span(x)

    # Cox-de Boor triangle with derivatives
    ndu = np.zeros((p + 1, p + 1))
    left = np.zeros(p + 1)
    right = np.zeros(p + 1)
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = x - t[span + 1 - j]
        right[j] = t[span + j] - x
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((max_deriv + 1, p + 1))
    ders[0, :] = ndu[:, p]
    a_ = np.zeros((2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a_[0, 0] = 1.0
        for k in range(1, max_deriv + 1):
            d = 0.0
            rk, pk = r - k, p - k
            if r >= k:
                a_[s2, 0] = a_[s1, 0] / ndu[pk + 1, rk]
                d = a_[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a_[s2, j] = (a_[s1, j] - a_[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a_[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a_[s2, k] = -a_[s1, k - 1] / ndu[pk + 1, r]
                d += a_[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1
    fac = p
    for k in range(1, max_deriv + 1):
        ders[k, :] *= fac
        fac *= p - k
    first = span - p
    ders *= kv.scaling[first : first + p + 1]
    return first, ders


def collocation(kv: KnotVector, points, deriv: int = 0) -> np.ndarray:
    """Dense ``(dim, len(points))`` matrix of basis values (or derivatives)."""
    points = np.asarray(points, dtype=float)
    out = np.zeros((kv.dim, len(points)))
    if deriv > kv.degree:
        return out
    for q, x in enumerate(points):
        first, table = eval_basis(kv, float(x), deriv)
        out[first : first + kv.degree + 1, q] = table[deriv]
    return out


def greville(kv: KnotVector) -> np.ndarray:
    """Greville abscissae; element midpoints for piecewise constants."""
    p, t = kv.degree, kv.knots
    if p == 0:
        return 0.5 * (t[:-1] + t[1:])
    return np.array([t[j + 1 : j + p + 1].mean() for j in range(kv.dim)])


def gauss_rule(q: int) -> Quadrature1D:
    """q-point Gauss-Legendre rule on [-1, 1]."""
    if q < 1:
        raise InputError(f"number of Gauss points must be >= 1, got {q}")
    x, w = np.polynomial.legendre.leggauss(q)
    return Quadrature1D(x, w)


def element_quadrature(kv: KnotVector, q: int):
    """Points and weights of a q-point Gauss rule on every element of ``kv``."""
    rule = gauss_rule(q)
    bp = kv.breakpoints
    lo, hi = bp[:-1, None], bp[1:, None]
    pts = 0.5 * (lo + hi) + 0.5 * (hi - lo) * rule.points[None, :]
    wts = 0.5 * (hi - lo) * rule.weights[None, :]
    return pts.ravel(), wts.ravel()


@dataclass(frozen=True, eq=False)
class CurlSpace:
    """Curl-conforming tensor-product spline space on an axis-aligned box.

    Component ``a`` uses the unit-integral degree p-1 factor in direction
    ``a`` and the degree p factor in the two other directions.  Local DOFs
    are numbered component-major, then z slowest and x fastest.
    """

    box: tuple
    degree: int
    divisions: tuple
    kvs: tuple  # scalar (degree p) knot vectors, one per direction
    dkvs: tuple  # unit-integral degree p-1 knot vectors
    component_shapes: tuple = field(init=False)
    offsets: tuple = field(init=False)

    def __post_init__(self):
        shapes = []
        for a in range(3):
            shapes.append(
                tuple(self.dkvs[d].dim if d == a else self.kvs[d].dim for d in range(3))
            )
        sizes = [int(np.prod(s)) for s in shapes]
        object.__setattr__(self, "component_shapes", tuple(shapes))
        object.__setattr__(self, "offsets", tuple(int(o) for o in np.concatenate([[0], np.cumsum(sizes)])))

    @property
    def n_dofs(self) -> int:
        return self.offsets[3]

    @property
    def scalar_dims(self) -> tuple:
        return tuple(kv.dim for kv in self.kvs)

    def component_size(self, a: int) -> int:
        return self.offsets[a + 1] - self.offsets[a]

    def factor(self, a: int, d: int) -> KnotVector:
        """Knot vector of component ``a`` in direction ``d``."""
        return self.dkvs[d] if d == a else self.kvs[d]

    def dof_index(self, a: int, i, j, k):
        nx, ny, _ = self.component_shapes[a]
        return self.offsets[a] + i + nx * (j + ny * k)

    def component_tensor(self, coeffs, a: int) -> np.ndarray:
        """View the ``a``-component coefficients as a (z, y, x) array."""
        nx, ny, nz = self.component_shapes[a]
        return np.asarray(coeffs)[self.offsets[a] : self.offsets[a + 1]].reshape(nz, ny, nx)

    def index_maps(self) -> list:
        """Per component, the (i, j, k) tensor index of every local DOF."""
        maps = []
        for a in range(3):
            nx, ny, nz = self.component_shapes[a]
            k, j, i = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
            maps.append(np.stack([i.ravel(), j.ravel(), k.ravel()], axis=1))
        return maps


def build_curl_space(p: int, divisions, box=((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))) -> CurlSpace:
    if p < 1:
        raise InputError(f"degree must be >= 1, got {p}")
    divisions = tuple(int(d) for d in divisions)
    if len(divisions) != 3 or min(divisions) < 1:
        raise InputError(f"divisions must be three positive integers, got {divisions}")
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    if any(not lo < hi for lo, hi in box):
        raise InputError(f"degenerate box {box}")
    kvs = tuple(make_spline_space(p, n, iv) for n, iv in zip(divisions, box))
    dkvs = tuple(derivative_space(kv) for kv in kvs)
    return CurlSpace(box, p, divisions, kvs, dkvs)


def difference_matrix(n: int) -> sp.csr_matrix:
    """(n-1) x n forward difference, -1 on the diagonal, +1 above it."""
    if n < 2:
        raise InputError("difference matrix needs n >= 2")
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr")


def discrete_gradient(scalar_dims) -> sp.csr_matrix:
    """Signed incidence matrix mapping scalar to curl-space coefficients."""
    nx, ny, nz = (int(n) for n in scalar_dims)
    if min(nx, ny, nz) < 2:
        raise InputError(f"scalar dimensions must be >= 2 each, got {scalar_dims}")
    Ix, Iy, Iz = sp.identity(nx), sp.identity(ny), sp.identity(nz)
    blocks = [
        sp.kron(Iz, sp.kron(Iy, difference_matrix(nx))),
        sp.kron(Iz, sp.kron(difference_matrix(ny), Ix)),
        sp.kron(difference_matrix(nz), sp.kron(Iy, Ix)),
    ]
    return sp.vstack(blocks, format="csr")
