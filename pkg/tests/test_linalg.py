import numpy as np
import pytest

from crlab.errors import DimensionTooLarge, NoConvergence, NotOrthogonal
from crlab.lattice import get_lattice
from crlab.linalg import (
    LinearMap,
    SolveOptions,
    cg_solve,
    dense_assemble,
    dense_sym_eig,
    identity_map,
    inverse_power_iteration,
    minres_solve,
    project_out,
    solve_with_kernel,
)
from crlab.operators import L_map, Structure, laplacian_map


def relres(op, u, rhs):
    return np.linalg.norm(op(u) - rhs) / np.linalg.norm(rhs)


def test_solve_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(rel_tol=0.0)
    with pytest.raises(ValueError):
        SolveOptions(max_iter=0)
    assert SolveOptions().budget(16) == 160


def test_linear_map_symmetry_on_probes(lat4, rng):
    op = laplacian_map(lat4, 0.7)
    for _ in range(10):
        u, v = rng.standard_normal((2, lat4.size))
        lhs, rhs = op(u) @ v, u @ op(v)
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


class TestCG:
    def test_identity(self, rng):
        g = rng.standard_normal(50)
        np.testing.assert_allclose(cg_solve(identity_map(50), g), g, rtol=1e-14)

    def test_constant_rhs(self, lat4):
        u = cg_solve(laplacian_map(lat4, 1.0), np.ones(lat4.size))
        np.testing.assert_allclose(u, 1.0, atol=1e-12)

    def test_trig_rhs_matches_dense_solve(self, lat4):
        op = laplacian_map(lat4, 1.0)
        rhs = lat4.sample("sin(2*pi*x)")
        u = cg_solve(op, rhs)
        exact = np.linalg.solve(dense_assemble(op), rhs)
        assert np.max(np.abs(u - exact)) < 1e-8
        assert relres(op, u, rhs) <= 1e-10

    def test_budget_exhaustion(self, lat4, rng):
        with pytest.raises(NoConvergence) as info:
            cg_solve(laplacian_map(lat4, 1e-3), rng.standard_normal(lat4.size),
                     SolveOptions(rel_tol=1e-14, max_iter=2))
        assert info.value.iterations == 2
        assert info.value.residual > 0


class TestMINRES:
    def test_identity(self, rng):
        g = rng.standard_normal(30)
        np.testing.assert_allclose(minres_solve(identity_map(30), g), g, rtol=1e-12)

    def test_singular_consistent(self, lat4, rng):
        op = laplacian_map(lat4)
        rhs = rng.standard_normal(lat4.size)
        rhs -= rhs.mean()
        u = minres_solve(op, rhs)
        assert relres(op, u, rhs) <= 1e-10

    def test_indefinite_matches_dense(self, lat4):
        op = laplacian_map(lat4, -5.0)
        M = dense_assemble(op)
        assert np.linalg.eigvalsh(M).min() < 0 < np.linalg.eigvalsh(M).max()
        rhs = lat4.sample("1 + cos(2*pi*y)*sin(2*pi*x)") + np.linspace(0, 1, lat4.size)
        u = minres_solve(op, rhs)
        assert np.max(np.abs(u - np.linalg.solve(M, rhs))) < 1e-8


class TestKernelSolve:
    def test_compatible_rhs(self, lat4):
        op = laplacian_map(lat4)
        rhs = lat4.sample("sin(2*pi*x)")
        u = solve_with_kernel(op, [np.ones(lat4.size)], rhs)
        assert relres(op, u, rhs) <= 1e-10
        assert abs(u.sum()) < 1e-10 * np.abs(u).sum()
        assert relres(op, u + 3.5, rhs) <= 1e-10

    def test_obstruction(self, lat4):
        with pytest.raises(NotOrthogonal) as info:
            solve_with_kernel(laplacian_map(lat4), [np.ones(lat4.size)], np.ones(lat4.size))
        assert info.value.inner_product != 0
        assert info.value.index == 0

    def test_projected_random_rhs(self, lat4, rng):
        op = laplacian_map(lat4)
        ker = [np.ones(lat4.size)]
        for _ in range(5):
            rhs = project_out(rng.standard_normal(lat4.size), ker)
            assert relres(op, solve_with_kernel(op, ker, rhs), rhs) <= 1e-10


class TestDenseOracle:
    def test_identity(self):
        vals, vecs = dense_sym_eig(np.eye(7))
        np.testing.assert_array_equal(vals, 1.0)
        np.testing.assert_allclose(vecs.T @ vecs, np.eye(7), atol=1e-15)

    def test_laplacian_N2_kernel(self):
        lat = get_lattice(2)
        vals, vecs = dense_sym_eig(dense_assemble(laplacian_map(lat)))
        assert abs(vals[0]) < 1e-12
        q = vecs[:, 0]
        np.testing.assert_allclose(q / q[0], 1.0, atol=1e-10)

    def test_laplacian_N4_spectrum(self, lat4):
        A = dense_assemble(laplacian_map(lat4))
        np.testing.assert_allclose(A, A.T, atol=1e-12)
        vals, vecs = dense_sym_eig(A)
        assert np.all(np.diff(vals) >= 0)
        assert vals[0] > -1e-10
        norm = np.linalg.norm(A, 2)
        for lam, q in zip(vals, vecs.T):
            assert np.linalg.norm(A @ q - lam * q) <= 1e-10 * norm
        np.testing.assert_allclose(vals, np.linalg.eigvalsh(A), atol=1e-10 * norm)

    def test_random_symmetric_against_numpy(self, rng):
        B = rng.standard_normal((60, 60))
        A = B + B.T
        vals, vecs = dense_sym_eig(A)
        np.testing.assert_allclose(vals, np.linalg.eigvalsh(A), atol=1e-11)
        np.testing.assert_allclose(vecs.T @ vecs, np.eye(60), atol=1e-12)

    def test_cap(self):
        big = LinearMap(lambda u: u, 257)
        with pytest.raises(DimensionTooLarge):
            dense_assemble(big)
        with pytest.raises(DimensionTooLarge):
            dense_sym_eig(np.eye(257))


class TestInverseIteration:
    @pytest.mark.parametrize("c", [0.0, -1.0, 2.5])
    def test_constant_rho(self, lat4, c):
        s = Structure.from_formula(4, c)
        pair = inverse_power_iteration(L_map(s), c - 1.0)
        assert pair.value == pytest.approx(c, abs=1e-10)
        np.testing.assert_allclose(pair.vector, pair.vector[0], rtol=1e-8)
        assert pair.vector.sum() > 0

    def test_sin_rho_matches_dense(self, lat4):
        s = Structure.from_formula(4, "sin(2*pi*x)")
        op = L_map(s)
        pair = inverse_power_iteration(op, float(s.rho.min()) - 1.0, volume=lat4.node_volume)
        vals, _ = dense_sym_eig(dense_assemble(op))
        assert abs(pair.value - vals[0]) < 1e-8
        assert pair.vector.min() > 0
        assert lat4.inner(pair.vector, pair.vector) == pytest.approx(1.0, abs=1e-12)
        assert pair.residual <= 1e-10 * max(1.0, abs(pair.value), 2.0)
