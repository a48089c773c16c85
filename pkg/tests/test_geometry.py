import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chcontrol.errors import ConformanceError, PreconditionError
from chcontrol.geometry import (
    Grid,
    TimeGrid,
    conv_backward,
    conv_forward,
    dual_norm,
    gradient_norm,
    inner,
    inner_q,
    inverse_neumann,
    laplacian_neumann,
    mean,
    norm_h1,
    norm_l2,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def dense_laplacian_1d(n, h):
    """Loop assembly with explicit mirrored ghost values."""
    A = np.zeros((n, n))
    for i in range(n):
        left = i - 1 if i > 0 else 0  # ghost f[-1] = f[0]
        right = i + 1 if i < n - 1 else n - 1  # ghost f[n] = f[n-1]
        A[i, left] += 1 / h**2
        A[i, right] += 1 / h**2
        A[i, i] -= 2 / h**2
    return A


def dense_laplacian_2d(nx, ny, hx, hy):
    A = np.zeros((nx * ny, nx * ny))
    idx = lambda i, j: i * ny + j
    for i in range(nx):
        for j in range(ny):
            row = idx(i, j)
            for di, dj, h in ((-1, 0, hx), (1, 0, hx), (0, -1, hy), (0, 1, hy)):
                ii = min(max(i + di, 0), nx - 1)
                jj = min(max(j + dj, 0), ny - 1)
                A[row, idx(ii, jj)] += 1 / h**2
                A[row, row] -= 1 / h**2
    return A


class TestGrid:
    def test_cell_volume_times_count_is_volume(self):
        g = Grid((2.0, 3.0), (8, 12))
        assert g.cell_volume * g.size == pytest.approx(g.volume, rel=1e-15)

    @pytest.mark.parametrize("lengths, nodes", [((1.0,), (3,)), ((0.0,), (8,)), ((1.0, -1.0), (8, 8)), ((1, 1, 1), (4, 4, 4))])
    def test_invalid(self, lengths, nodes):
        with pytest.raises(PreconditionError):
            Grid(lengths, nodes)

    def test_time_grid(self):
        tg = TimeGrid(0.5, 10)
        assert tg.tau == 0.05
        assert tg.times[-1] == pytest.approx(0.5)
        assert tg.weights("right")[0] == 0 and tg.weights("left")[-1] == 0
        with pytest.raises(PreconditionError):
            TimeGrid(1.0, 1)
        with pytest.raises(PreconditionError):
            TimeGrid(-1.0, 4)

    def test_conformance(self):
        g = Grid.uniform(1, 1.0, 8)
        with pytest.raises(ConformanceError):
            laplacian_neumann(np.zeros(9), g)
        with pytest.raises(ConformanceError):
            g.check_series(np.zeros((3, 8)), TimeGrid(1.0, 4))


class TestLaplacian:
    def test_constant_is_annihilated(self):
        g = Grid.uniform(2, 1.0, 8)
        assert np.all(laplacian_neumann(np.full(g.shape, 3.7), g) == 0)

    @pytest.mark.parametrize("k", [1, 2, 5])
    def test_cosine_eigenmode(self, k):
        g = Grid.uniform(1, 2.0, 32)
        (x,) = g.coordinates()
        h = g.spacing[0]
        f = np.cos(k * np.pi * x / 2.0)
        factor = -(2 / h**2) * (1 - np.cos(k * np.pi * h / 2.0))
        np.testing.assert_allclose(laplacian_neumann(f, g), factor * f, atol=1e-10)

    def test_dense_oracle_1d(self, rng):
        g = Grid.uniform(1, 1.3, 16)
        f = rng.standard_normal(16)
        ref = dense_laplacian_1d(16, g.spacing[0]) @ f
        assert np.max(np.abs(laplacian_neumann(f, g) - ref)) <= 1e-12 * np.max(np.abs(ref))

    def test_dense_oracle_2d(self, rng):
        g = Grid((1.0, 2.0), (16, 12))
        f = rng.standard_normal(g.shape)
        ref = dense_laplacian_2d(16, 12, *g.spacing) @ f.ravel()
        assert np.max(np.abs(laplacian_neumann(f, g).ravel() - ref)) <= 1e-12 * np.max(np.abs(ref))

    @settings(max_examples=30, deadline=None)
    @given(arrays(float, (6, 7), elements=finite), arrays(float, (6, 7), elements=finite))
    def test_symmetric_and_mean_free(self, f, k):
        g = Grid((1.0, 1.0), (6, 7))
        Lf = laplacian_neumann(f, g)
        scale = 1 + np.max(np.abs(f))
        assert abs(mean(Lf, g)) <= 1e-13 * scale * np.max(np.abs(g.laplacian).sum(axis=1))
        lhs, rhs = inner(Lf, k, g), inner(f, laplacian_neumann(k, g), g)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9 * scale * (1 + np.max(np.abs(k))) * 1e3)


class TestMeanAndNorms:
    def test_mean(self, rng):
        g = Grid((1.0, 2.0), (8, 10))
        assert mean(np.full(g.shape, -2.5), g) == pytest.approx(-2.5)
        x, y = g.coordinates()
        assert abs(mean(np.cos(np.pi * x), g)) <= 1e-14
        f = rng.standard_normal(g.shape)
        assert mean(f, g) == pytest.approx(sum(f.ravel()) / f.size, rel=1e-12)

    def test_norms(self, rng):
        g = Grid((2.0,), (16,))
        assert norm_l2(np.zeros(16), g) == 0
        assert norm_l2(np.full(16, -3.0), g) == pytest.approx(3 * np.sqrt(2.0))
        assert gradient_norm(np.full(16, 1.0), g) == 0
        f, k = rng.standard_normal(16), rng.standard_normal(16)
        assert abs(inner(f, k, g)) <= norm_l2(f, g) * norm_l2(k, g)
        assert norm_h1(f, g) >= norm_l2(f, g)

    def test_gradient_norm_summation_by_parts(self, rng):
        g = Grid((1.0, 1.5), (9, 7))
        f = rng.standard_normal(g.shape)
        assert gradient_norm(f, g) ** 2 == pytest.approx(-inner(laplacian_neumann(f, g), f, g), rel=1e-12)


class TestInverseNeumann:
    def test_zero(self):
        g = Grid.uniform(2, 1.0, 8)
        assert np.all(inverse_neumann(np.zeros(g.shape), g) == 0)

    def test_eigenmode(self):
        g = Grid.uniform(1, 1.0, 32)
        (x,) = g.coordinates()
        lam = g.laplacian_eigenvalues[3]
        f = np.cos(3 * np.pi * x)
        for method in ("cg", "dct"):
            np.testing.assert_allclose(inverse_neumann(f, g, method=method), f / lam, atol=1e-12)

    def test_methods_agree_with_dense_pseudo_inverse(self, rng):
        g = Grid((1.0, 2.0), (8, 6))
        psi = rng.standard_normal(g.shape)
        psi -= psi.mean()
        ref = np.linalg.pinv(-g.laplacian.toarray()) @ psi.ravel()
        for method in ("cg", "dct"):
            np.testing.assert_allclose(inverse_neumann(psi, g, method=method).ravel(), ref, atol=1e-10)

    def test_nonzero_mean_rejected(self):
        g = Grid.uniform(1, 1.0, 8)
        with pytest.raises(PreconditionError):
            inverse_neumann(np.ones(8), g)

    @settings(max_examples=25, deadline=None)
    @given(arrays(float, (5, 6), elements=st.floats(-10, 10)), arrays(float, (5, 6), elements=st.floats(-10, 10)))
    def test_symmetry_property(self, psi, zeta):
        g = Grid((1.0, 1.0), (5, 6))
        psi, zeta = psi - psi.mean(), zeta - zeta.mean()
        if np.max(np.abs(psi)) < 1e-8 or np.max(np.abs(zeta)) < 1e-8:
            return
        n_psi, n_zeta = inverse_neumann(psi, g), inverse_neumann(zeta, g)
        a, b = inner(psi, n_zeta, g), inner(zeta, n_psi, g)
        assert abs(a - b) <= 1e-10 * norm_l2(psi, g) * norm_l2(n_zeta, g) + 1e-14
        np.testing.assert_allclose(-laplacian_neumann(n_psi, g), psi, atol=1e-9 * np.max(np.abs(psi)))


class TestDualNorm:
    def test_constant_and_zero(self):
        g = Grid.uniform(2, 1.0, 8)
        assert dual_norm(np.full(g.shape, -0.7), g) == pytest.approx(0.7)
        assert dual_norm(np.zeros(g.shape), g) == 0

    def test_eigenmode(self):
        g = Grid.uniform(1, 1.0, 32)
        (x,) = g.coordinates()
        f = 2.0 * np.cos(2 * np.pi * x)
        lam = g.laplacian_eigenvalues[2]
        # explicit dense gradient of N f
        z = np.linalg.pinv(-g.laplacian.toarray()) @ f
        grad = np.diff(z) / g.spacing[0]
        dense = np.sqrt(np.sum(grad**2) * g.cell_volume)
        assert dual_norm(f, g) == pytest.approx(norm_l2(f, g) / np.sqrt(lam), rel=1e-10)
        assert dual_norm(f, g) == pytest.approx(dense, rel=1e-10)


class TestConvolutions:
    def test_constant(self):
        tg = TimeGrid(1.0, 8)
        v = np.full((9, 3), 2.0)
        np.testing.assert_allclose(conv_forward(v, tg)[:, 0], 2.0 * np.arange(9) * tg.tau, rtol=1e-15)
        assert np.all(conv_forward(np.zeros((9, 3)), tg) == 0)

    def test_linear_integrand(self):
        tg = TimeGrid(1.0, 100)
        v = tg.times[:, None]
        total = conv_forward(v, tg)[-1, 0]
        assert total == pytest.approx(np.sum(tg.tau * tg.times[1:]))
        assert abs(total - 0.5) <= tg.tau * tg.T

    def test_backward_difference_identity(self, rng):
        tg = TimeGrid(0.7, 12)
        v = rng.standard_normal((13, 4))
        R = conv_backward(v, tg, rule="left")
        np.testing.assert_allclose((R[1:] - R[:-1]) / tg.tau, -v[:-1], atol=1e-13)
        assert np.all(R[-1] == 0)
        full = conv_forward(v, tg, rule="left")[-1]
        np.testing.assert_allclose(R[0], full, atol=1e-14)

    def test_inner_q(self, rng):
        g, tg = Grid.uniform(1, 2.0, 8), TimeGrid(0.5, 5)
        ones = np.ones((6, 8))
        assert inner_q(ones, ones, g, tg) == pytest.approx(2.0 * 0.5)
