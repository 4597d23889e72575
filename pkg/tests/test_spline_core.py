import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from eddyieti.assembly import assemble_stiffness
from eddyieti.errors import InputError
from eddyieti.spline_core import (
    build_curl_space,
    collocation,
    derivative_space,
    discrete_gradient,
    eval_basis,
    gauss_rule,
    greville,
    make_spline_space,
)


class TestKnotVector:
    def test_linear_two_elements(self):
        kv = make_spline_space(1, 2, (0, 1))
        np.testing.assert_array_equal(kv.knots, [0, 0, 0.5, 1, 1])
        assert kv.dim == 3

    def test_quadratic_dim(self):
        assert make_spline_space(2, 4).dim == 6

    def test_cubic_on_subinterval(self):
        kv = make_spline_space(3, 8, (0.5, 1.0))
        assert kv.dim == 11
        np.testing.assert_allclose(np.diff(kv.breakpoints), 1 / 16)

    @pytest.mark.parametrize("p,n", [(1, 1), (2, 3), (3, 5)])
    def test_end_multiplicity(self, p, n):
        kv = make_spline_space(p, n)
        assert np.all(kv.knots[: p + 1] == 0) and kv.knots[p + 1] > 0
        assert np.all(kv.knots[-p - 1 :] == 1) and kv.knots[-p - 2] < 1
        assert np.all(np.diff(kv.knots) >= 0)
        assert kv.dim == n + p

    @pytest.mark.parametrize("args", [(0, 2, (0, 1)), (1, 0, (0, 1)), (1, 2, (1, 1)), (2, 2, (1, 0))])
    def test_invalid(self, args):
        with pytest.raises(InputError):
            make_spline_space(*args)

    def test_equality_and_hash(self):
        a, b = make_spline_space(2, 3), make_spline_space(2, 3)
        assert a == b and hash(a) == hash(b)
        assert a != make_spline_space(2, 4)


class TestEvalBasis:
    def test_hats_at_quarter(self):
        kv = make_spline_space(1, 2)
        first, tab = eval_basis(kv, 0.25)
        assert first == 0
        np.testing.assert_allclose(tab[0], [0.5, 0.5])

    def test_outside_interval(self):
        with pytest.raises(InputError):
            eval_basis(make_spline_space(2, 2), 1.5)

    def test_derivative_order_too_high(self):
        with pytest.raises(InputError):
            eval_basis(make_spline_space(1, 2), 0.3, max_deriv=2)

    @settings(max_examples=60, deadline=None)
    @given(
        p=st.integers(1, 4),
        n=st.integers(1, 9),
        x=st.floats(0.0, 1.0, allow_nan=False),
    )
    def test_partition_of_unity(self, p, n, x):
        kv = make_spline_space(p, n)
        _, tab = eval_basis(kv, x, 1)
        assert tab.shape == (2, p + 1)
        assert abs(tab[0].sum() - 1.0) <= 1e-12
        assert abs(tab[1].sum()) <= 1e-12 * max(1.0, np.abs(tab[1]).max())

    @pytest.mark.parametrize("p,n", [(1, 3), (2, 4), (3, 5)])
    def test_hundred_random_points(self, p, n, rng):
        kv = make_spline_space(p, n, (0.0, 2.0))
        xs = rng.uniform(0, 2, 100)
        V = collocation(kv, xs, 0)
        D = collocation(kv, xs, 1)
        assert np.abs(V.sum(axis=0) - 1).max() <= 1e-12
        assert np.abs(D.sum(axis=0)).max() <= 1e-12

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_derivative_matches_finite_difference(self, p, rng):
        kv = make_spline_space(p, 3)
        for x in rng.uniform(0.05, 0.95, 10):
            h = 1e-6
            fd = (collocation(kv, [x + h])[:, 0] - collocation(kv, [x - h])[:, 0]) / (2 * h)
            np.testing.assert_allclose(collocation(kv, [x], 1)[:, 0], fd, atol=1e-6)


class TestDerivativeSpace:
    @pytest.mark.parametrize("p,n,dim", [(2, 4, 5), (1, 2, 2), (3, 2, 4)])
    def test_dims(self, p, n, dim):
        kv = make_spline_space(p, n)
        dkv = derivative_space(kv)
        assert dkv.dim == dim == kv.dim - 1
        assert dkv.degree == p - 1
        np.testing.assert_array_equal(dkv.breakpoints, kv.breakpoints)

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_unit_integral(self, p):
        dkv = derivative_space(make_spline_space(p, 4))
        x, w = np.polynomial.legendre.leggauss(8)
        total = np.zeros(dkv.dim)
        for lo, hi in zip(dkv.breakpoints[:-1], dkv.breakpoints[1:]):
            pts = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x
            total += collocation(dkv, pts) @ (0.5 * (hi - lo) * w)
        np.testing.assert_allclose(total, 1.0, atol=1e-13)

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_derivative_identity(self, p, rng):
        kv = make_spline_space(p, 3)
        dkv = derivative_space(kv)
        c = rng.standard_normal(kv.dim)
        xs = rng.uniform(0, 1, 20)
        lhs = collocation(kv, xs, 1).T @ c
        rhs = collocation(dkv, xs).T @ np.diff(c)
        np.testing.assert_allclose(lhs, rhs, atol=1e-11)

    def test_greville_constants_are_midpoints(self):
        dkv = derivative_space(make_spline_space(1, 4))
        np.testing.assert_allclose(greville(dkv), [0.125, 0.375, 0.625, 0.875])


class TestGauss:
    def test_one_point(self):
        r = gauss_rule(1)
        np.testing.assert_allclose(r.points, [0.0])
        np.testing.assert_allclose(r.weights, [2.0])

    def test_two_points(self):
        r = gauss_rule(2)
        np.testing.assert_allclose(sorted(r.points), [-1 / np.sqrt(3), 1 / np.sqrt(3)])
        np.testing.assert_allclose(r.weights, [1.0, 1.0])
        assert r.weights @ r.points**2 == pytest.approx(2 / 3, abs=1e-15)

    @pytest.mark.parametrize("q", range(1, 7))
    def test_exactness(self, q):
        r = gauss_rule(q)
        assert r.weights.sum() == pytest.approx(2.0, abs=1e-14)
        for k in range(2 * q):
            exact = 0.0 if k % 2 else 2.0 / (k + 1)
            assert r.weights @ r.points**k == pytest.approx(exact, abs=1e-13)

    def test_invalid(self):
        with pytest.raises(InputError):
            gauss_rule(0)


def _count_tensor_indices(p, divs):
    """Enumerate tensor indices of the three components one by one."""
    total, per = 0, []
    for a in range(3):
        ranges = [range(divs[d] + p - 1) if d == a else range(divs[d] + p) for d in range(3)]
        n = sum(1 for _ in itertools.product(*ranges))
        per.append(n)
        total += n
    return per, total


class TestCurlSpace:
    def test_p1_two_per_direction(self):
        sp_ = build_curl_space(1, (2, 2, 2))
        assert [sp_.component_size(a) for a in range(3)] == [18, 18, 18]
        assert sp_.n_dofs == 54 == _count_tensor_indices(1, (2, 2, 2))[1]

    def test_p2_two_per_direction(self):
        sp_ = build_curl_space(2, (2, 2, 2))
        assert sp_.component_size(0) == 48
        assert sp_.n_dofs == 144 == _count_tensor_indices(2, (2, 2, 2))[1]

    def test_hexahedron(self):
        assert build_curl_space(1, (1, 1, 1)).n_dofs == 12

    @pytest.mark.parametrize("p,divs", [(1, (1, 2, 3)), (2, (3, 1, 2)), (3, (2, 2, 1))])
    def test_component_counts(self, p, divs):
        sp_ = build_curl_space(p, divs)
        per, total = _count_tensor_indices(p, divs)
        assert [sp_.component_size(a) for a in range(3)] == per
        dx, dy, dz = divs
        assert per[0] == (dx + p - 1) * (dy + p) * (dz + p)
        assert sp_.n_dofs == total

    def test_numbering_deterministic(self):
        a = build_curl_space(2, (2, 3, 1)).index_maps()
        b = build_curl_space(2, (2, 3, 1)).index_maps()
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_x_fastest(self):
        sp_ = build_curl_space(1, (2, 2, 2))
        assert sp_.dof_index(0, 1, 0, 0) == 1
        assert sp_.dof_index(0, 0, 1, 0) == 2
        assert sp_.dof_index(1, 0, 0, 0) == 18

    def test_degenerate_box(self):
        with pytest.raises(InputError):
            build_curl_space(1, (1, 1, 1), ((0, 1), (0.5, 0.5), (0, 1)))


class TestDiscreteGradient:
    def test_hexahedron_incidence(self):
        G = discrete_gradient((2, 2, 2)).toarray()
        assert G.shape == (12, 8)
        assert set(np.unique(G)) <= {-1.0, 0.0, 1.0}
        assert np.all((G != 0).sum(axis=1) == 2)
        assert np.all(G.sum(axis=1) == 0)
        # each cube vertex touches three edges
        assert np.all((G != 0).sum(axis=0) == 3)

    def test_constants_in_kernel(self):
        G = discrete_gradient((4, 3, 5))
        assert np.abs(G @ np.ones(60)).max() == 0

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_represents_gradient(self, p, rng):
        """Curl-space field built from G c equals grad of the scalar field."""
        space = build_curl_space(p, (2, 3, 2))
        G = discrete_gradient(space.scalar_dims)
        c = rng.standard_normal(int(np.prod(space.scalar_dims)))
        a = G @ c
        pts = rng.uniform(0, 1, (5, 3))
        C = c.reshape(space.scalar_dims[::-1])
        for x, y, z in pts:
            Nx = [collocation(space.kvs[d], [v], 0)[:, 0] for d, v in enumerate((x, y, z))]
            dN = [collocation(space.kvs[d], [v], 1)[:, 0] for d, v in enumerate((x, y, z))]
            grad = [
                np.einsum("kji,i,j,k->", C, dN[0], Nx[1], Nx[2]),
                np.einsum("kji,i,j,k->", C, Nx[0], dN[1], Nx[2]),
                np.einsum("kji,i,j,k->", C, Nx[0], Nx[1], dN[2]),
            ]
            for comp in range(3):
                f = [collocation(space.factor(comp, d), [v], 0)[:, 0] for d, v in enumerate((x, y, z))]
                val = np.einsum("kji,i,j,k->", space.component_tensor(a, comp), *f)
                assert val == pytest.approx(grad[comp], abs=1e-11)

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_kernel_of_stiffness(self, p):
        space = build_curl_space(p, (2, 3, 2))
        K = assemble_stiffness(space)
        G = discrete_gradient(space.scalar_dims)
        KG = K @ G
        assert abs(KG).max() <= 1e-12 * abs(K).max()

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            discrete_gradient((1, 2, 2))

    def test_sparse_format(self):
        assert sp.issparse(discrete_gradient((3, 3, 3)))
