"""The two power nonlinearities and the conserved energy.

The equation under study is

    i u_t + Laplace u + |u|^(4/N) u + sign * |u|^(p-1) u = 0,

with the mass-critical leading power and a subcritical lower-order
power 1 < p < 1 + 4/N; sign = +1 selects the focusing lower-order term.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "q_exponent", "alpha_exponent", "validate_exponents",
    "f_crit", "F_crit", "g_sub", "G_sub",
    "df_crit", "dg_sub",
    "energy", "mass",
]


def q_exponent(dim):
    """Mass-critical power: f(u) = |u|^q u with q = 4/N."""
    return 4.0 / dim


def alpha_exponent(dim, p):
    """Subcriticality gap alpha = 2 - N(p-1)/2, in (0, 2)."""
    return 2.0 - dim * (p - 1.0) / 2.0


def validate_exponents(dim, p, alpha_min=0.05):
    """Reject p outside (1, 1+4/N) or too close to the critical power."""
    dim = int(dim)
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if not 1.0 < p < 1.0 + 4.0 / dim:
        raise ValueError(f"p={p} outside the subcritical range (1, {1 + 4 / dim})")
    alpha = alpha_exponent(dim, p)
    if alpha < alpha_min:
        raise ValueError(
            f"alpha={alpha:.4f} below {alpha_min}: too close to the critical power")
    return alpha


def f_crit(z, q):
    return np.abs(z) ** q * z


def F_crit(z, q):
    """Potential of f: F(z) = |z|^(q+2) / (q+2)."""
    return np.abs(z) ** (q + 2.0) / (q + 2.0)


def g_sub(z, p):
    return np.abs(z) ** (p - 1.0) * z


def G_sub(z, p):
    return np.abs(z) ** (p + 1.0) / (p + 1.0)


def _dpower(z, w, expo):
    # Real-linear derivative of |z|^expo z in direction w:
    #   (1 + expo/2)|z|^expo w + (expo/2)|z|^(expo-2) z^2 conj(w)
    az = np.abs(z)
    first = (1.0 + expo / 2.0) * az ** expo * w
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(az > 0.0, z / np.where(az > 0.0, az, 1.0), 0.0)
    second = (expo / 2.0) * az ** expo * ratio ** 2 * np.conj(w)
    return first + second


def df_crit(z, w, q):
    """Real-linear differential of the critical nonlinearity at z."""
    return _dpower(z, w, q)


def dg_sub(z, w, p):
    return _dpower(z, w, p - 1.0)


def mass(grid, u):
    return grid.norm_sq(u)


def energy(grid, u, p, sign=+1):
    """Conserved energy; sign=+1 is the focusing lower-order term.

      E(u) = 1/2 ||grad u||^2 - 1/(q+2) ||u||_{q+2}^{q+2}
             - sign/(p+1) ||u||_{p+1}^{p+1},  q = 4/N.
    """
    q = q_exponent(grid.dim)
    kin = 0.5 * grid.grad_norm_sq(u)
    crit = grid.pnorm(u, q + 2.0) / (q + 2.0)
    sub = grid.pnorm(u, p + 1.0) / (p + 1.0)
    return kin - crit - sign * sub
