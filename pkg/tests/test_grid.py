import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chdbc.grid import Grid

G = Grid()


def mesh(g=G):
    return g.mesh


@pytest.mark.parametrize("nx,ny", [(3, 10), (5, 10), (8, 3), (2, 2)])
def test_invalid_grids(nx, ny):
    with pytest.raises(ValueError):
        Grid(nx, ny)


def test_measures():
    assert G.area == pytest.approx(1.0, abs=1e-15)
    assert G.boundary_length == pytest.approx(2.0, abs=1e-15)
    assert G.hx == 1 / 32 and G.hy == 1 / 32


def test_mean_examples():
    X, Y = mesh()
    assert G.mean(np.full(G.shape, 3.0)) == pytest.approx(3.0, abs=1e-14)
    assert abs(G.mean(np.cos(2 * np.pi * X))) < 1e-14
    assert G.mean(Y) == pytest.approx(0.5, abs=1e-12)


def test_laplacian_examples():
    X, Y = mesh()
    assert np.max(np.abs(G.laplacian_neumann(np.full(G.shape, 2.5)))) < 1e-10
    f = np.cos(np.pi * Y)
    discrete = (2 / G.hy**2) * (np.cos(np.pi * G.hy) - 1)
    np.testing.assert_allclose(G.laplacian_neumann(f), discrete * f, atol=1e-9)
    assert np.max(np.abs(G.laplacian_neumann(f) + np.pi**2 * f)) < 0.01
    fx = np.cos(2 * np.pi * X)
    discrete_x = (2 / G.hx**2) * (np.cos(2 * np.pi * G.hx) - 1)
    np.testing.assert_allclose(G.laplacian_neumann(fx), discrete_x * fx, atol=1e-9)
    assert np.max(np.abs(G.laplacian_neumann(fx) + 4 * np.pi**2 * fx)) < 0.2


def test_helmholtz_examples():
    X, Y = mesh()
    y = G.helmholtz_neumann_solve(0.3, np.full(G.shape, 1.2))
    np.testing.assert_allclose(y, 4.0, atol=1e-10)
    f = np.cos(np.pi * Y)
    y = G.helmholtz_neumann_solve(1.0, f)
    assert np.max(np.abs(y - f / (1 + np.pi**2))) < 1e-3
    res = 1.0 * y - G.laplacian_neumann(y) - f
    assert G.norm(res) <= 1e-9 * G.norm(f)


@pytest.mark.parametrize("lam", [2.0, 0.1, 0.01])
def test_helmholtz_mean_identity(lam):
    f = np.random.default_rng(int(lam * 100)).standard_normal(G.shape) + 0.7
    assert G.mean(G.helmholtz_neumann_solve(lam, f)) == pytest.approx(G.mean(f) / lam, abs=1e-11)


def test_inverse_laplacian():
    X, Y = mesh()
    np.testing.assert_array_equal(G.neumann_inverse_laplacian(G.zeros()), 0.0)
    f = np.cos(np.pi * Y)
    w = G.neumann_inverse_laplacian(f)
    assert abs(G.mean(w)) < 1e-14
    assert np.max(np.abs(w - f / np.pi**2)) < 1e-3
    with pytest.raises(ValueError, match="mean"):
        G.neumann_inverse_laplacian(f + 0.5)


def test_normal_derivative_examples():
    X, Y = mesh()
    np.testing.assert_allclose(G.normal_derivative(Y), [[-1.0] * 32, [1.0] * 32], atol=1e-12)
    np.testing.assert_allclose(G.normal_derivative(np.full(G.shape, 4.0)), 0.0, atol=1e-12)
    np.testing.assert_allclose(G.normal_derivative(Y**2), [[0.0] * 32, [2.0] * 32], atol=1e-11)


def test_strong_laplacian_exact_on_quadratics():
    X, Y = mesh()
    np.testing.assert_allclose(G.laplacian(3 * Y**2 - Y), 6.0, atol=1e-9)


def test_laplace_beltrami():
    v = np.cos(2 * np.pi * G.x)[None, :].repeat(2, axis=0)
    np.testing.assert_allclose(G.laplace_beltrami(np.full(G.bshape, 1.3)), 0.0, atol=1e-10)
    assert np.max(np.abs(G.laplace_beltrami(v) + 4 * np.pi**2 * v)) < 0.2
    rng = np.random.default_rng(4)
    a, b = rng.standard_normal(G.bshape), rng.standard_normal(G.bshape)
    assert G.boundary_inner(G.laplace_beltrami(a), b) == pytest.approx(
        G.boundary_inner(a, G.laplace_beltrami(b)), rel=1e-12)
    assert G.boundary_inner(G.laplace_beltrami(a), a) <= 0
    np.testing.assert_allclose(G.laplace_beltrami(a + 2 * b),
                               G.laplace_beltrami(a) + 2 * G.laplace_beltrami(b), atol=1e-9)


def test_v_norm():
    X, _ = mesh()
    assert G.v_norm(np.full(G.shape, -2.0)) == pytest.approx(2.0)
    assert G.v_norm(G.zeros()) == 0.0
    # analytic: |grad cos(2 pi x)|^2 integrates to 2 pi^2, so the norm is sqrt(2) pi
    assert G.v_norm(np.cos(2 * np.pi * X)) == pytest.approx(math.sqrt(2) * np.pi, rel=5e-3)


def test_smoothing_of_initial_data():
    X, Y = mesh()
    np.testing.assert_allclose(G.smooth_initial_datum(0.1, np.full(G.shape, 0.4)), 0.4, atol=1e-10)
    u0 = np.cos(2 * np.pi * X) * np.cos(np.pi * Y)
    dists = []
    for eps in (0.1, 0.05, 0.025, 0.0125):
        s = G.smooth_initial_datum(eps, u0)
        assert G.v_norm(s) <= G.v_norm(u0) + 1e-8
        dists.append(G.v_norm(s - u0))
    assert all(b < a for a, b in zip(dists, dists[1:]))


def test_weak_form_identity():
    rng = np.random.default_rng(11)
    a, b = rng.standard_normal(G.shape), rng.standard_normal(G.shape)
    assert -G.inner(G.laplacian_neumann(a), b) == pytest.approx(G.dirichlet_form(a, b), rel=1e-11)
    K = G.stiffness
    assert a.ravel() @ (K @ b.ravel()) == pytest.approx(G.dirichlet_form(a, b), rel=1e-11)


def test_green_identity_holds_discretely():
    # the strong Laplacian and one-sided normal derivative pair up with the
    # quadrature so that integration by parts is exact, not just O(h^2)
    errs = []
    for n in (16, 32, 64):
        g = Grid(n, n + 1)
        X, Y = g.mesh
        f = np.cos(2 * np.pi * X) * (Y**3 - Y**2 / 2) + np.sin(Y)
        h = np.cos(2 * np.pi * X) + Y**2
        lhs = g.inner(g.laplacian(f), h) + g.dirichlet_form(f, h)
        rhs = g.boundary_inner(g.normal_derivative(f), g.trace(h))
        errs.append(abs(lhs - rhs))
    assert max(errs) < 1e-12


def test_trace_matrix():
    f = np.random.default_rng(2).standard_normal(G.shape)
    np.testing.assert_array_equal((G.trace_matrix.T @ f.ravel()).reshape(G.bshape), G.trace(f))


def test_boundary_bfield_checks():
    with pytest.raises(ValueError):
        G.check_bfield(np.full(G.bshape, np.inf))


def test_boundary_helmholtz():
    v = np.cos(2 * np.pi * G.x)[None, :].repeat(2, axis=0)
    y = G.boundary_helmholtz_solve(2.0, v)
    np.testing.assert_allclose(2.0 * y - G.laplace_beltrami(y), v, atol=1e-10)


@pytest.mark.parametrize("bad", [np.zeros((3, 3)), np.full(G.shape, np.nan)])
def test_field_checks(bad):
    with pytest.raises(ValueError):
        G.check_field(bad)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_adjoint_and_semidefinite(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal(G.shape), rng.standard_normal(G.shape)
    lhs = G.inner(G.laplacian_neumann(a), b)
    assert lhs == pytest.approx(G.inner(a, G.laplacian_neumann(b)), rel=1e-10, abs=1e-10)
    assert G.inner(G.laplacian_neumann(a), a) <= 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1.0, 0.1, 0.01]))
def test_helmholtz_round_trip(seed, lam):
    f = np.random.default_rng(seed).standard_normal(G.shape)
    y = G.helmholtz_neumann_solve(lam, f)
    assert G.norm(lam * y - G.laplacian_neumann(y) - f) <= 1e-8 * G.norm(f)
