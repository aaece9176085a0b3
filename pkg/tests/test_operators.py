import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crlab.convergence import analytic_sub_laplacian
from crlab.errors import LatticeMismatch, NonPositiveInput
from crlab.lattice import get_lattice
from crlab.linalg import cg_solve, dense_assemble
from crlab.operators import (
    Constants,
    Structure,
    apply_A,
    apply_L,
    apply_T,
    apply_Tprime,
    check_same_lattice,
    dirichlet_energy,
    horizontal_gradient,
    quadratic_form,
    schrodinger_map,
    sub_laplacian,
)


def close(a, b, rel=1e-12):
    return abs(a - b) <= rel * max(abs(a), abs(b), 1.0)


def test_constants():
    c = Constants()
    assert (c.n, c.a, c.b) == (1, 3.0, 4.0)
    assert Constants(2).a == 2.0 and Constants(2).b == 3.0


def test_structure_rho_is_frozen():
    s = Structure.from_formula(4, "-1")
    with pytest.raises(ValueError):
        s.rho[0] = 3.0
    with pytest.raises(LatticeMismatch):
        Structure(get_lattice(4), np.ones(5))
    with pytest.raises(ValueError):
        Structure(get_lattice(4), np.full(256, np.nan))
    assert s.zero_tol() == pytest.approx(1e-6 * 4 * 16)


class TestGradientAndLaplacian:
    def test_constant(self, lattice):
        u = lattice.constant(2.5)
        assert not horizontal_gradient(u, lattice).any()
        assert not sub_laplacian(u, lattice).any()

    def test_gradient_sin(self, lat4):
        u = lat4.sample("sin(2*pi*x)")
        grad = horizontal_gradient(u, lat4)
        i = lat4.i
        expected = (np.sin(2 * np.pi * (i + 1) / 4) - np.sin(2 * np.pi * i / 4)) * 4
        np.testing.assert_allclose(grad[0], expected, atol=1e-13)
        np.testing.assert_allclose(grad[1], 0.0, atol=1e-13)

    def test_stencil_definition(self, lat4, rng):
        u = lat4.random_field(rng)
        p = 37
        nbrs = [lat4.index(*q) for q in lat4.neighbors(lat4.point(p)).values()]
        assert sub_laplacian(u, lat4)[p] == pytest.approx(16 * sum(u[q] - u[p] for q in nbrs))

    @pytest.mark.parametrize("expr, factor", [("sin(2*pi*x)", -4), ("sin(2*pi*x)*sin(2*pi*y)", -8)])
    def test_trig_eigen_behaviour(self, expr, factor):
        errs = []
        for N in (8, 16):
            lat = get_lattice(N)
            u = lat.sample(expr)
            mask = np.abs(u) > 0.5
            ratio = sub_laplacian(u, lat)[mask] / u[mask]
            errs.append(np.max(np.abs(ratio / (factor * np.pi**2) - 1)))
        assert errs[0] < 0.1 and errs[1] < errs[0] / 3

    @pytest.mark.parametrize("expr", ["sin(2*pi*x)", "sin(2*pi*x)*sin(2*pi*y)", "cos(2*pi*y) + 0.5*sin(4*pi*x)"])
    def test_matches_symbolic_frame(self, expr):
        lat = get_lattice(16)
        exact = analytic_sub_laplacian(expr)(lat.x, lat.y, lat.t)
        scale = np.max(np.abs(exact))
        assert np.max(np.abs(sub_laplacian(lat.sample(expr), lat) - exact)) < 0.05 * scale

    def test_symbolic_oracle_values(self):
        x = np.array([0.1, 0.3])
        y = np.array([0.2, 0.7])
        t = np.zeros(2)
        np.testing.assert_allclose(
            analytic_sub_laplacian("sin(2*pi*x)*sin(2*pi*y)")(x, y, t),
            -8 * np.pi**2 * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y),
        )

    def test_summation_by_parts(self, lattice, rng):
        for _ in range(10):
            u = lattice.random_field(rng)
            assert close(dirichlet_energy(u, lattice), lattice.inner(-sub_laplacian(u, lattice), u))


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([2, 4, 8]), st.integers(0, 2**32 - 1))
def test_discrete_divergence_and_symmetry(N, seed):
    lat = get_lattice(N)
    rng = np.random.default_rng(seed)
    u, v = lat.random_field(rng), lat.random_field(rng)
    Du, Dv = sub_laplacian(u, lat), sub_laplacian(v, lat)
    assert abs(lat.integrate(Du)) <= 1e-12 * lat.integrate(np.abs(Du))
    assert close(lat.inner(Du, v), lat.inner(u, Dv))
    assert lat.inner(-Du, u) >= 0


class TestL:
    def test_examples(self, lat4, rng):
        assert not apply_L(Structure.from_formula(4, 0.0), lat4.constant(3.0)).any()
        np.testing.assert_array_equal(apply_L(Structure.from_formula(4, -1.0), lat4.constant(1.0)), -1.0)
        s = Structure.from_formula(4, "-1 + 0.3*sin(2*pi*x)")
        u, v = lat4.random_field(rng), lat4.random_field(rng)
        assert close(lat4.inner(apply_L(s, u), v), lat4.inner(u, apply_L(s, v)))

    def test_quadratic_form(self, lattice, rng):
        assert quadratic_form(Structure(lattice, lattice.constant(0.0)), lattice.constant(2.0)) == 0.0
        s = Structure(lattice, lattice.constant(-0.7))
        assert quadratic_form(s, lattice.constant(2.0)) == pytest.approx(-2.8, rel=1e-14)
        s = Structure(lattice, lattice.random_field(rng))
        u = lattice.random_field(rng)
        assert close(quadratic_form(s, u), lattice.inner(apply_L(s, u), u))


class TestT:
    def test_identity_case(self):
        s = Structure.from_formula(4, "-1 + 0.3*sin(2*pi*x)")
        np.testing.assert_allclose(apply_T(s, s.lattice.constant(1.0)), s.rho, rtol=1e-15)

    def test_constant_two(self):
        s = Structure.from_formula(4, -1.0)
        np.testing.assert_allclose(apply_T(s, s.lattice.constant(2.0)), -0.25, rtol=1e-15)

    def test_homogeneity(self, lat4, rng):
        s = Structure(lat4, lat4.random_field(rng))
        u = 1.0 + rng.random(lat4.size)
        np.testing.assert_allclose(apply_T(s, 2.0 * u) * 2.0 ** (s.a - 1), apply_T(s, u), rtol=1e-12, atol=1e-12)

    def test_rejects_nonpositive(self, lat4):
        s = Structure.from_formula(4, -1.0)
        u = lat4.constant(1.0)
        u[3] = 0.0
        with pytest.raises(NonPositiveInput):
            apply_T(s, u)
        with pytest.raises(NonPositiveInput):
            apply_A(s, u, u)
        with pytest.raises(NonPositiveInput):
            apply_Tprime(s, u, u)


class TestLinearization:
    def test_A_examples(self, lat4, rng):
        s0 = Structure.from_formula(4, 0.0)
        one = lat4.constant(1.0)
        assert not apply_A(s0, one, lat4.constant(4.0)).any()
        mu = 0.75
        s = Structure.from_formula(4, s0.b / (1 - s0.a) * mu)
        v = lat4.random_field(rng)
        np.testing.assert_allclose(apply_A(s, one, v), -sub_laplacian(v, lat4) + mu * v, rtol=1e-13, atol=1e-12)

    def test_A_adjoint(self, lat4, rng):
        s = Structure(lat4, lat4.random_field(rng))
        u0 = 1.0 + rng.random(lat4.size)
        v, w = lat4.random_field(rng), lat4.random_field(rng)
        assert close(lat4.inner(apply_A(s, u0, v), w), lat4.inner(v, apply_A(s, u0, w)))

    def test_Tprime_identity_and_zero(self, lat4, rng):
        s = Structure.from_formula(4, "-1 + 0.3*sin(2*pi*x)")
        u0 = 1.0 + 0.2 * rng.random(lat4.size)
        v = lat4.random_field(rng)
        assert not apply_Tprime(s, u0, np.zeros(lat4.size)).any()
        np.testing.assert_array_equal(apply_Tprime(s, u0, v), s.b * u0 ** (-s.a) * apply_A(s, u0, v))

    def test_Tprime_finite_difference(self, rng):
        lat = get_lattice(4)
        s = Structure.from_formula(4, "-1 + 0.3*sin(2*pi*x)")
        u0 = lat.sample("1 + 0.2*sin(2*pi*y)")
        v = lat.sample("cos(2*pi*x)")
        Tv = apply_Tprime(s, u0, v)
        ts = [1e-2, 1e-3, 1e-4]
        errs = [np.max(np.abs((apply_T(s, u0 + t * v) - apply_T(s, u0)) / t - Tv)) for t in ts]
        slopes = np.diff(np.log(errs)) / np.diff(np.log(ts))
        assert np.all(np.abs(slopes - 1.0) < 0.3)
        ratios = np.array(errs) / np.array(ts)
        assert ratios.max() < 2 * ratios.min()

    def test_kernels_coincide(self, lat4):
        # With rho = 0 and u0 = 1, A = -Delta; constants span both kernels.
        s = Structure.from_formula(4, 0.0)
        one = lat4.constant(1.0)
        assert not apply_A(s, one, one).any()
        assert not apply_Tprime(s, one, one).any()


def test_maximum_principle(lat4, rng):
    f = 0.1 + rng.random(lat4.size)
    op = schrodinger_map(lat4, f)
    M = dense_assemble(op)
    off = M - np.diag(np.diag(M))
    assert off.max() <= 0
    for _ in range(10):
        g = rng.random(lat4.size) * (rng.random(lat4.size) < 0.3)
        v = cg_solve(op, g)
        assert v.min() >= -1e-12


def test_lattice_mismatch():
    s = Structure.from_formula(4, 0.0)
    with pytest.raises(LatticeMismatch):
        check_same_lattice(s, np.ones(10))
    with pytest.raises(LatticeMismatch):
        apply_L(s, np.ones(4096))
