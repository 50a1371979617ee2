"""Ground-state solver, linearized operators, and coercivity checks."""

import math

import numpy as np
import pytest

from mmblow.radial import fit_exponential_rate
from mmblow.groundstate import coercivity_mu, ground_state

# independently established peak heights and masses (shooting on
# refined grids agrees with the published soliton values)
FROZEN = {
    1: {"height": 3.0 ** 0.25, "mass": 2.7206990463513775},
    2: {"height": 2.2062009, "mass": 11.700896},
    3: {"height": 4.1917226, "mass": 63.783116},
    4: {"height": 8.6719340, "mass": 408.856887},
}


@pytest.mark.parametrize("dim", [1, 2])
def test_equation_residual(gs_of, dim):
    gs = gs_of(dim)
    g, qv = gs.grid, gs.Q.values
    resid = g.laplacian(qv) - qv + qv ** (gs.q + 1.0)
    rel = math.sqrt(g.norm_sq(resid) / g.norm_sq(qv))
    assert rel <= 1e-10


@pytest.mark.parametrize("dim", [1, 2, 3, 4])
def test_frozen_height_and_mass(gs_of, dim):
    gs = gs_of(dim)
    assert gs.norms["height"] == pytest.approx(FROZEN[dim]["height"],
                                               rel=1e-6)
    assert gs.norms["mass"] == pytest.approx(FROZEN[dim]["mass"], rel=1e-6)


def test_dim1_closed_form(gs_of):
    gs = gs_of(1)
    closed = 3.0 ** 0.25 / np.sqrt(np.cosh(2.0 * gs.grid.r))
    assert np.max(np.abs(gs.Q.values - closed)) <= 1e-8


@pytest.mark.parametrize("dim", [1, 2])
def test_linearized_identities(gs_of, dim):
    assert max(gs_of(dim).identity_residuals().values()) <= 1e-6


@pytest.mark.parametrize("dim", [1, 3])
def test_zero_critical_energy(gs_of, dim):
    gs = gs_of(dim)
    e_crit = 0.5 * gs.norms["grad_sq"] - gs.norms["crit"] / (gs.q + 2.0)
    assert abs(e_crit) <= 1e-8 * 0.5 * gs.norms["grad_sq"]


def test_tail_decays_like_linear_rate(gs_of):
    gs = gs_of(1)
    rate, _ = fit_exponential_rate(gs.grid, gs.Q.values)
    assert 0.95 < rate < 1.05


def test_pairing_q_rho(gs_of):
    gs = gs_of(2)
    got = gs.grid.inner(gs.Q.values, gs.rho.values)
    assert got == pytest.approx(0.5 * gs.norms["r_moment"], rel=1e-6)


def test_lplus_solver_roundtrip(gs_of):
    gs = gs_of(1)
    rhs = gs.grid.r ** 2 * gs.Q.values
    sol = gs.solve_lplus(rhs)
    resid = gs.apply_lplus(sol) - rhs
    rel = math.sqrt(gs.grid.norm_sq(resid) / gs.grid.norm_sq(rhs))
    assert rel <= 1e-8


def test_lminus_kernel_is_q(gs_of):
    gs = gs_of(2)
    out = gs.apply_lminus(gs.Q.values)
    assert math.sqrt(gs.grid.norm_sq(out) / gs.grid.norm_sq(gs.Q.values)) \
        <= 1e-6


def test_coercivity_value_dim1():
    mu = coercivity_mu(1)
    assert mu == pytest.approx(0.06046123, rel=1e-4)
    assert mu > 0.0


def test_ground_state_carries_mu_when_requested():
    gs = ground_state(1, with_mu=True)
    assert gs.mu == pytest.approx(0.06046123, rel=1e-4)
