"""Ground state of the mass-critical problem and its linearized toolbox.

The ground state Q > 0 is the decaying radial solution of

    Laplace Q - Q + Q^(1+4/N) = 0  on R^N.

Around Q the linearized operators are

    Lplus  = -Laplace + 1 - (1 + 4/N) Q^(4/N)   (real part),
    Lminus = -Laplace + 1 - Q^(4/N)             (imaginary part),

with Lminus Q = 0.  The module also provides rho, the decaying solution
of Lplus rho = r^2 Q, and the coercivity constant of the pair
(Lplus, Lminus) under the standard three orthogonality constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.sparse

from . import radial
from .nonlin import q_exponent
from .radial import RadialFunction, RadialGrid, make_grid

__all__ = [
    "GroundStateData", "ground_state", "solve_gs_values",
    "apply_lplus", "apply_lminus", "solve_lplus", "solve_lminus",
    "coercivity_mu",
]

DEFAULT_RMAX = 32.0
DEFAULT_NODES = 2561  # spacing 1/80


def _shoot(dim, q, u0, rmax):
    """Integrate the radial ODE from the origin with height u0.

    Returns ("cross" | "turn" | "ok", solution) where "cross" means the
    profile dived through zero (height too large) and "turn" means it
    stopped decreasing while positive (height too small).
    """
    def rhs(r, y):
        u, v = y
        return [v, u - np.abs(u) ** q * u - (dim - 1) / r * v]

    def ev_cross(r, y):
        return y[0]
    ev_cross.terminal = True
    ev_cross.direction = -1

    def ev_turn(r, y):
        return y[1]
    ev_turn.terminal = True
    ev_turn.direction = 1

    r0 = 1e-6
    u2 = (u0 - u0 ** (1.0 + q)) / dim
    y0 = [u0 + 0.5 * u2 * r0 ** 2, u2 * r0]
    sol = scipy.integrate.solve_ivp(
        rhs, (r0, rmax), y0, method="DOP853",
        rtol=1e-13, atol=1e-16, events=(ev_cross, ev_turn),
        dense_output=True)
    if sol.t_events[0].size:
        return "cross", sol
    if sol.t_events[1].size:
        return "turn", sol
    return "ok", sol


def _shoot_height(dim, q, rmax):
    """Bisect the origin height of the decaying positive solution."""
    lo, hi = 1.0, 2.0
    while _shoot(dim, q, lo, rmax)[0] != "turn":
        lo *= 0.7
        if lo < 1e-2:
            raise RuntimeError("no lower shooting bracket")
    while _shoot(dim, q, hi, rmax)[0] != "cross":
        hi *= 1.5
        if hi > 1e3:
            raise RuntimeError("no upper shooting bracket")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        kind, _ = _shoot(dim, q, mid, rmax)
        if kind == "cross":
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-14 * hi:
            break
    return 0.5 * (lo + hi)


def _tail_graft(grid, vals, dim):
    """Replace untrustworthy far-field samples with the linear tail.

    The decaying solution behaves like A r^(-(N-1)/2) exp(-r); grafting
    from the radius where the shot solution has decayed far below the
    bisection noise keeps the Newton starting guess clean.
    """
    r = grid.r
    peak = np.max(np.abs(vals))
    small = np.abs(vals) < 1e-6 * peak
    small[r < 1.0] = False
    if not small.any():
        return vals
    i0 = int(np.argmax(small))
    shape = r[i0:] ** (-(dim - 1) / 2.0) * np.exp(-(r[i0:] - r[i0]))
    return np.concatenate([vals[:i0], vals[i0] * r[i0] ** ((dim - 1) / 2.0) * shape])


def solve_gs_values(grid):
    """Ground state samples on the grid (shooting + Newton polish).

    The polish iterates Newton on the order-8 collocation of the ODE
    with a far-field Dirichlet pin, down to residual 1e-13 * max Q.
    """
    dim, q = grid.dim, q_exponent(grid.dim)
    u0 = _shoot_height(dim, q, grid.rmax)
    _, sol = _shoot(dim, q, u0, grid.rmax)
    rr = np.clip(grid.r, 1e-6, sol.t[-1])
    vals = sol.sol(rr)[0]
    vals[0] = u0
    vals = _tail_graft(grid, vals, dim)

    # Newton floor: applying the order-8 stencils costs ~ eps * peak / h^2
    # in roundoff, so convergence is declared at that scale.
    lap = grid.lap
    tail_pin = vals[-1]
    floor = 50.0 * np.finfo(float).eps * np.max(np.abs(vals)) / grid.h ** 2
    best = np.inf
    for _ in range(25):
        f_res = lap @ vals - vals + np.abs(vals) ** q * vals
        f_res[-1] = vals[-1] - tail_pin
        res = np.max(np.abs(f_res[:-1]))
        if res <= floor or res >= 0.5 * best:
            break
        best = min(best, res)
        jac = lap - scipy.sparse.identity(grid.n) \
            + scipy.sparse.diags((1.0 + q) * np.abs(vals) ** q)
        ab = radial.banded_from_csr(jac.tocsr())
        radial.dirichlet_last_row(ab)
        vals = vals - radial.solve_banded(ab, f_res)
    if res > 1e-10 * np.max(np.abs(vals)):
        raise RuntimeError("ground state Newton polish did not converge")
    if np.any(vals < -1e-12) or np.any(np.diff(vals) > 1e-10):
        raise RuntimeError("ground state lost positivity/monotonicity")
    return vals


def _potential(gs_vals, q, critical):
    fac = (1.0 + q) if critical else 1.0
    return 1.0 - fac * np.abs(gs_vals) ** q


def apply_lplus(grid, gs_vals, u):
    q = q_exponent(grid.dim)
    return -grid.laplacian(u) + _potential(gs_vals, q, True) * u


def apply_lminus(grid, gs_vals, u):
    q = q_exponent(grid.dim)
    return -grid.laplacian(u) + _potential(gs_vals, q, False) * u


def _operator_ab(grid, gs_vals, critical):
    q = q_exponent(grid.dim)
    op = (-grid.lap + scipy.sparse.diags(_potential(gs_vals, q, critical))).tocsr()
    ab = radial.banded_from_csr(op)
    radial.dirichlet_last_row(ab)
    return ab


def solve_lplus(grid, gs_vals, rhs, _ab_cache=None):
    """Solve Lplus x = rhs for decaying rhs (Dirichlet pin at rmax)."""
    ab = _ab_cache if _ab_cache is not None else _operator_ab(grid, gs_vals, True)
    b = np.array(rhs, dtype=float)
    b[-1] = 0.0
    return radial.solve_banded(ab, b)


def solve_lminus(grid, gs_vals, rhs, _ab_cache=None):
    """Solve Lminus x = rhs on the complement of the kernel span{Q}.

    rhs is projected onto Q-perp (its Q component is the solvability
    defect, returned for inspection); the solution is gauge-fixed by
    (x, Q) = 0.  Falls back to a dense bordered system if the banded
    solve leaves a bad residual.
    """
    w_gs = grid.weights * gs_vals
    q_mass = float(w_gs @ gs_vals)
    defect = float(w_gs @ rhs) / q_mass
    b = np.asarray(rhs, dtype=float) - defect * gs_vals
    ab = _ab_cache if _ab_cache is not None else _operator_ab(grid, gs_vals, False)
    bb = b.copy()
    bb[-1] = 0.0
    x = radial.solve_banded(ab, bb)
    x = x - (float(w_gs @ x) / q_mass) * gs_vals
    res = apply_lminus(grid, gs_vals, x) - b
    scale = float(np.max(np.abs(b))) + 1e-300
    if np.max(np.abs(res[:-1])) > 1e-7 * scale:
        qq = q_exponent(grid.dim)
        dense = (-grid.lap + scipy.sparse.diags(
            _potential(gs_vals, qq, False))).toarray()
        big = np.zeros((grid.n + 1, grid.n + 1))
        big[:-1, :-1] = dense
        big[:-1, -1] = w_gs
        big[-1, :-1] = w_gs
        sol = np.linalg.solve(big, np.concatenate([b, [0.0]]))
        x = sol[:-1]
        x = x - (float(w_gs @ x) / q_mass) * gs_vals
    return x, defect


@dataclass
class GroundStateData:
    """Ground state plus the derived statics used everywhere else.

    norms holds: mass = ||Q||_2^2, grad_sq = ||grad Q||_2^2,
    crit = ||Q||_{2+4/N}^{2+4/N}, r_moment = ||r Q||_2^2,
    r2_moment = ||r^2 Q||_2^2, and height = Q(0).
    """

    grid: RadialGrid
    Q: RadialFunction
    rho: RadialFunction
    mu: float
    norms: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.grid.dim

    @property
    def q(self):
        return q_exponent(self.grid.dim)

    def pnorm(self, p):
        """||Q||_{p+1}^{p+1} for the lower-order power p."""
        return self.grid.pnorm(self.Q.values, p + 1.0)

    def apply_lplus(self, u):
        return apply_lplus(self.grid, self.Q.values, u)

    def apply_lminus(self, u):
        return apply_lminus(self.grid, self.Q.values, u)

    def solve_lplus(self, rhs):
        if not hasattr(self, "_ab_plus"):
            self._ab_plus = _operator_ab(self.grid, self.Q.values, True)
        return solve_lplus(self.grid, self.Q.values, rhs, self._ab_plus)

    def solve_lminus(self, rhs):
        if not hasattr(self, "_ab_minus"):
            self._ab_minus = _operator_ab(self.grid, self.Q.values, False)
        return solve_lminus(self.grid, self.Q.values, rhs, self._ab_minus)

    def identity_residuals(self):
        """Relative residuals of the classical linearized identities.

        Checks Lminus Q = 0, Lplus (Lambda Q) = -2Q,
        Lminus (r^2 Q) = -4 Lambda Q, Lplus rho = r^2 Q, and the pairing
        (Q, rho) = 1/2 ||r Q||^2.
        """
        g, qv, rv = self.grid, self.Q.values, self.rho.values
        lam_q = g.lambda_op(qv)
        scale = math.sqrt(g.norm_sq(qv))

        def rel(resid, ref):
            return math.sqrt(g.norm_sq(resid)) / ref

        r2q = g.r ** 2 * qv
        out = {
            "lminus_q": rel(self.apply_lminus(qv), scale),
            "lplus_lambda_q": rel(self.apply_lplus(lam_q) + 2.0 * qv, scale),
            "lminus_r2q": rel(self.apply_lminus(r2q) + 4.0 * lam_q,
                              math.sqrt(g.norm_sq(lam_q)) * 4.0),
            "lplus_rho": rel(self.apply_lplus(rv) - r2q,
                             math.sqrt(g.norm_sq(r2q))),
            "q_rho_pairing": abs(g.inner(qv, rv) - 0.5 * self.norms["r_moment"])
            / self.norms["r_moment"],
        }
        return out


def _norms(grid, vals):
    q = q_exponent(grid.dim)
    return {
        "height": float(vals[0]),
        "mass": grid.norm_sq(vals),
        "grad_sq": grid.grad_norm_sq(vals),
        "crit": grid.pnorm(vals, q + 2.0),
        "r_moment": grid.moment_sq(vals, 1),
        "r2_moment": grid.moment_sq(vals, 2),
    }


def ground_state(dim, rmax=DEFAULT_RMAX, n=DEFAULT_NODES, with_mu=True):
    """Compute the ground state data set in dimension dim.

    Parameters
    ----------
    dim : int
        Spatial dimension (1..4 exercised routinely).
    rmax, n : grid extent and node count; defaults give spacing 1/80.
    with_mu : also compute the coercivity constant (two dense
        eigensolves on coarser grids); disable for quick statics.
    """
    grid = make_grid(dim, rmax, n)
    vals = solve_gs_values(grid)
    q_fun = RadialFunction(grid, vals)
    rho_vals = solve_lplus(grid, vals, grid.r ** 2 * vals)
    rho_fun = RadialFunction(grid, rho_vals, decay_tag="poly")
    mu = coercivity_mu(dim, rmax=rmax) if with_mu else float("nan")
    return GroundStateData(grid=grid, Q=q_fun, rho=rho_fun, mu=mu,
                           norms=_norms(grid, vals))


# -- coercivity --------------------------------------------------------------


def _p1_stiffness_mass(r, dim, potential):
    """Linear-element stiffness and weighted mass matrices.

    Assembles integral r^(dim-1) |u'|^2 and integral r^(dim-1) V u^2
    over linear elements with two-point Gauss quadrature per element.
    These forms measure the energy of the piecewise-linear interpolant
    exactly, so (unlike high-order collocation stencils) the eigensolve
    built on them cannot produce spurious low modes with corners at the
    origin.  Both matrices are returned as dense arrays already scaled
    by the sphere area factor.
    """
    n = r.size
    h = r[1] - r[0]
    mid = 0.5 * (r[:-1] + r[1:])
    off = 0.5 * h / math.sqrt(3.0)
    area = omega = radial.omega_surface(dim)
    kk = np.zeros((n, n))
    mm = np.zeros((n, n))
    idx = np.arange(n - 1)
    for x_g in (mid - off, mid + off):
        wgt = 0.5 * h * area * x_g ** (dim - 1)
        v_g = np.interp(x_g, r, potential)
        phi_r = (x_g - r[:-1]) / h      # hat of the right node
        phi_l = 1.0 - phi_r
        kk[idx, idx] += wgt / h ** 2
        kk[idx + 1, idx + 1] += wgt / h ** 2
        kk[idx, idx + 1] -= wgt / h ** 2
        kk[idx + 1, idx] -= wgt / h ** 2
        mm[idx, idx] += wgt * v_g * phi_l ** 2
        mm[idx + 1, idx + 1] += wgt * v_g * phi_r ** 2
        mm[idx, idx + 1] += wgt * v_g * phi_l * phi_r
        mm[idx + 1, idx] += wgt * v_g * phi_l * phi_r
    return kk, mm


def _restriction_eig(dim, rmax, n):
    """Smallest constrained Rayleigh quotients of the linearized pair,
    measured against the H1 Gram form, on an n-node grid."""
    grid = make_grid(dim, rmax, n)
    vals = solve_gs_values(grid)
    q = q_exponent(dim)
    r = grid.r
    ones = np.ones(n)
    kin, gram = _p1_stiffness_mass(r, dim, ones)
    b_h1 = kin + gram
    w = grid.weights

    def smallest(potential, constraints):
        _, pot_m = _p1_stiffness_mass(r, dim, potential)
        a_form = kin + pot_m
        c = np.column_stack([w * v for v in constraints])
        basis = scipy.linalg.null_space(c.T)
        a_red = basis.T @ a_form @ basis
        b_red = basis.T @ b_h1 @ basis
        vals_ = scipy.linalg.eigh(a_red, b_red, subset_by_index=[0, 0],
                                  eigvals_only=True)
        return float(vals_[0])

    r2q = r ** 2 * vals
    rho_vals = solve_lplus(grid, vals, r2q)
    mu_plus = smallest(1.0 - (1.0 + q) * np.abs(vals) ** q, [vals, r2q])
    mu_minus = smallest(1.0 - np.abs(vals) ** q, [rho_vals])
    return min(mu_plus, mu_minus)


def coercivity_mu(dim, rmax=DEFAULT_RMAX, n=1201, check_stability=False):
    """Coercivity constant of the linearized pair under the constraints
    (real part) perp {Q, r^2 Q} and (imaginary part) perp {rho}, measured
    in the H1 norm.

    The linear-element eigenvalues carry an O(h^2) bias, so the value is
    Richardson-extrapolated from spacings h and 2h.  With
    check_stability=True a third level enters and the pair
    (mu, relative shift under node doubling) is returned.
    """
    n = int(n)
    half = (n - 1) // 2 + 1
    mu_h = _restriction_eig(dim, rmax, n)
    mu_2h = _restriction_eig(dim, rmax, half)
    mu = (4.0 * mu_h - mu_2h) / 3.0
    if not check_stability:
        return mu
    mu_h2 = _restriction_eig(dim, rmax, 2 * (n - 1) + 1)
    fine = (4.0 * mu_h2 - mu_h) / 3.0
    return fine, abs(fine - mu) / abs(fine)
