"""Profile-expansion construction and evaluator checks."""

import math

import numpy as np
import pytest

from mmblow import law
from mmblow.nonlin import alpha_exponent, validate_exponents
from mmblow.blowup_profile import beta_from_norms, build_expansion

BETA_DIM1_P2 = 1.0849183812649386


def test_alpha_exponent():
    assert alpha_exponent(1, 2.0) == pytest.approx(1.5)
    assert alpha_exponent(2, 2.0) == pytest.approx(1.0)
    assert alpha_exponent(4, 1.5) == pytest.approx(1.0)


def test_validate_exponents_rejects_critical_power():
    with pytest.raises(ValueError):
        validate_exponents(2, 3.0)    # alpha = 0: no scale separation
    with pytest.raises(ValueError):
        validate_exponents(1, 1.0)    # lower term must be superlinear


def test_expansion_order_must_be_positive(gs_of):
    with pytest.raises(ValueError):
        build_expansion(gs_of(1), 2.0, K=0)


def test_beta_closed_form_dim1(expansion_of):
    exp = expansion_of(1)
    assert exp.beta == pytest.approx(BETA_DIM1_P2, rel=1e-10)
    assert beta_from_norms(exp.gs, 2.0) == pytest.approx(BETA_DIM1_P2,
                                                         rel=1e-10)


@pytest.mark.parametrize("dim,p", [(1, 3.0), (2, 1.1), (3, 2.0)])
def test_beta_recursion_matches_norm_formula(gs_of, dim, p):
    exp = build_expansion(gs_of(dim), p, K=1)
    assert exp.beta == pytest.approx(beta_from_norms(gs_of(dim), p),
                                     rel=1e-8)


def test_theta_leading_term(expansion_of):
    exp = expansion_of(1)
    lam = 1e-4
    assert exp.theta(0.0, lam) == pytest.approx(exp.beta * lam ** exp.alpha,
                                                rel=1e-5)


def test_profile_tends_to_ground_state(expansion_of):
    exp = expansion_of(1)
    pp = exp.eval_profile(1e-5, 1e-5)
    rel = math.sqrt(exp.grid.norm_sq(pp - exp.gs.Q.values)
                    / exp.gs.norms["mass"])
    assert rel < 1e-6


def test_trust_region_enforced(expansion_of):
    exp = expansion_of(1)
    with pytest.raises(ValueError):
        exp.eval_profile(0.9, 0.01)
    with pytest.raises(ValueError):
        exp.eval_profile(0.1, 0.9)


def test_residual_shrinks_into_the_corner(expansion_of):
    exp = expansion_of(1)
    big = exp.weighted_residual_h1(0.1, 0.1 ** (2.0 / exp.alpha))
    small = exp.weighted_residual_h1(0.01, 0.01 ** (2.0 / exp.alpha))
    # graded order K+2 in b: four orders of magnitude per decade at K=2
    assert small < 1e-7 * big


def test_certificate_residual_at_roundoff(expansion_of):
    cert = expansion_of(1).certificate
    assert cert["max_graded_residual"] < 1e-8
    assert cert["solvability"] < 1e-8


def test_mass_deficit_positive_and_decaying(expansion_of):
    exp = expansion_of(1)
    d_big = exp.mass_deficit(0.3, 0.1)
    d_small = exp.mass_deficit(0.03, 0.001)
    assert d_big > d_small > 0.0


def test_energy_matching_roundtrip(expansion_of):
    exp = expansion_of(1)
    c = law.make_constants(exp, E0=0.25, lambda0=0.1)
    lam = 0.02
    b = law.energy_matched_b(exp, c, lam)
    assert exp.rescaled_energy(b, lam) == pytest.approx(0.25, abs=1e-10)


def test_rescale_to_physical_preserves_mass(expansion_of):
    from mmblow.radial import make_grid
    exp = expansion_of(1)
    b, lam = 0.1, 0.05
    phys = make_grid(1, 12.0, 40001)
    vals = exp.rescale_to_physical(b, lam, 0.3, phys.r)
    mass_resc = phys.norm_sq(vals)
    mass_prof = exp.grid.norm_sq(exp.eval_profile(b, lam))
    assert mass_resc == pytest.approx(mass_prof, rel=1e-6)


def test_residual_field_is_orthogonal_to_nothing_spurious(expansion_of):
    # the construction zeroes the kernel obstructions order by order:
    # the full nonlinear residual pairs with Q only at graded error size
    exp = expansion_of(1)
    b = 0.05
    lam = b ** (2.0 / exp.alpha)
    resid = exp.residual_field(b, lam)
    pairing = abs(exp.grid.inner(np.imag(resid), exp.gs.Q.values))
    assert pairing < 1e-2 * exp.weighted_residual_h1(b, lam)
