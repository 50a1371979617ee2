"""Grid, quadrature, derivative, and helper checks for the radial core."""

import math

import numpy as np
import pytest

from mmblow.radial import (RadialGrid, RadialFunction, make_grid,
                           fd_weights, fit_exponential_rate,
                           check_pairing_identities, banded_from_csr,
                           solve_banded, dirichlet_last_row,
                           save_columns, load_columns)


def gaussian_mass(dim):
    # integral of exp(-r^2) against the volume element = pi^(N/2)
    return math.pi ** (dim / 2.0)


@pytest.mark.parametrize("dim", [1, 2, 3, 4])
def test_gaussian_quadrature_invariant(dim):
    g = make_grid(dim, 14.0, 1601)
    got = g.integrate(np.exp(-g.r ** 2))
    assert abs(got - gaussian_mass(dim)) <= 1e-10 * gaussian_mass(dim)


def test_quadrature_weights_positive():
    g = make_grid(3, 12.0, 901)
    assert np.all(g.weights >= 0.0)
    assert g.weights[0] == 0.0  # volume element kills the origin node


def test_moment_and_pnorm_against_closed_forms():
    g = make_grid(1, 16.0, 2001)
    u = np.exp(-g.r ** 2 / 2.0)
    # ||r u||^2 = integral r^2 e^{-r^2} dr over R = sqrt(pi)/2
    assert abs(g.moment_sq(u, 1) - math.sqrt(math.pi) / 2.0) < 1e-12
    # ||u||_4^4 = integral e^{-2 r^2} = sqrt(pi/2)
    assert abs(g.pnorm(u, 4.0) - math.sqrt(math.pi / 2.0)) < 1e-12


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_laplacian_on_gaussian(dim):
    g = make_grid(dim, 12.0, 1201)
    u = np.exp(-g.r ** 2)
    exact = (4.0 * g.r ** 2 - 2.0 * dim) * u
    err = np.max(np.abs(g.laplacian(u) - exact))
    assert err < 1e-9


def test_derivative_even_symmetry_fold():
    # derivative of an even function vanishes at r = 0
    g = make_grid(2, 10.0, 1001)
    u = np.cos(g.r) * np.exp(-g.r ** 2 / 4.0)
    d = g.deriv(u)
    assert abs(d[0]) < 1e-10
    exact = -np.sin(g.r) * np.exp(-g.r ** 2 / 4.0) \
        - 0.5 * g.r * np.cos(g.r) * np.exp(-g.r ** 2 / 4.0)
    assert np.max(np.abs(d - exact)) < 1e-9


def test_lambda_op_matches_definition():
    g = make_grid(3, 10.0, 901)
    u = np.exp(-g.r ** 2)
    lam = g.lambda_op(u)
    ref = (g.dim / 2.0) * u + g.r * g.deriv(u)
    assert np.max(np.abs(lam - ref)) < 1e-12


def test_h1_norm_decomposes():
    g = make_grid(2, 12.0, 1201)
    u = np.exp(-g.r ** 2 / 3.0)
    assert abs(g.h1_norm_sq(u)
               - (g.norm_sq(u) + g.grad_norm_sq(u))) < 1e-12


def test_fd_weights_reproduce_central_second_derivative():
    w = fd_weights([-1, 0, 1], 2)
    assert np.allclose(w, [1.0, -2.0, 1.0])
    # first-derivative weights integrate a linear exactly
    w1 = fd_weights([-2, -1, 0, 1, 2], 1)
    assert abs(np.dot(w1, np.array([-2.0, -1.0, 0.0, 1.0, 2.0]))
               - 1.0) < 1e-13


def test_grid_selfcheck_rejects_coarse_grid():
    with pytest.raises(ValueError):
        make_grid(1, 12.0, 64)


def test_grid_json_roundtrip():
    g = make_grid(2, 9.0, 301)
    g2 = RadialGrid.from_json(g.to_json())
    assert g2 == g


def test_pairing_identities_on_gaussian():
    g = make_grid(1, 16.0, 2001)
    w = RadialFunction(g, np.exp(-g.r ** 2))
    res = check_pairing_identities(w, 4.0)
    assert max(res.values()) < 1e-8


def test_fit_exponential_rate_recovers_rate():
    g = make_grid(1, 20.0, 2001)
    rate, _ = fit_exponential_rate(g, 3.0 * np.exp(-1.7 * g.r))
    assert abs(rate - 1.7) < 1e-6


def test_banded_solve_roundtrip():
    import scipy.sparse
    rng = np.random.default_rng(7)
    n = 40
    mat = scipy.sparse.diags(
        [rng.normal(size=n - 1), 4.0 + rng.normal(size=n),
         rng.normal(size=n - 1)], [-1, 0, 1]).tocsr()
    ab = banded_from_csr(mat)
    x = rng.normal(size=n)
    got = solve_banded(ab, mat @ x)
    assert np.max(np.abs(got - x)) < 1e-10


def test_dirichlet_last_row_pins_boundary():
    import scipy.sparse
    n = 30
    mat = scipy.sparse.diags([np.ones(n - 1), -2.0 * np.ones(n),
                              np.ones(n - 1)], [-1, 0, 1]).tocsr()
    ab = dirichlet_last_row(banded_from_csr(mat))
    rhs = np.ones(n)
    rhs[-1] = 0.0
    assert abs(solve_banded(ab, rhs)[-1]) < 1e-14


def test_radial_function_validates_shape():
    g = make_grid(1, 8.0, 201)
    with pytest.raises(ValueError):
        RadialFunction(g, np.zeros(5))


def test_save_load_columns_roundtrip(tmp_path):
    path = tmp_path / "cols.csv"
    x = np.linspace(0.0, 1.0, 17)
    save_columns(path, r=x, v=x ** 2)
    cols = load_columns(path)
    assert set(cols) == {"r", "v"}
    assert np.allclose(cols["v"], x ** 2, atol=1e-15)
