"""Graded construction of the slowly modulated blow-up profile.

The profile is a two-parameter deformation of the ground state,

    P(b, lam) = Q + sum over j+k <= K of
        b^(2j) lam^((k+1) alpha) * (Pplus_jk + i b Pminus_jk),

together with a scalar series

    theta(b, lam) = sum b^(2j) lam^((k+1) alpha) beta_jk,

chosen so that the self-similar equation

    i dP/ds + Laplace P - P + f(P) + lam^alpha g(P) + (theta/4) r^2 P = Psi

has a residual Psi of graded order (b^2 + lam^alpha)^(K+2), where d/ds
acts through the reduced flow b_s = theta - b^2, lam_s = -b lam.
Monomials b^m lam^(n alpha) are graded by degree m + 2n, so each pair
(j, k) owns the real coefficient at (2j, k+1) and the imaginary one at
(2j+1, k+1); solvability of the paired kernel equation fixes beta_jk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.interpolate
from scipy.special import binom

from . import nonlin
from .groundstate import GroundStateData
from .nonlin import q_exponent, validate_exponents

__all__ = ["ProfileExpansion", "ProfilePair", "build_expansion", "beta_from_norms"]


def _deg(key):
    return key[0] + 2 * key[1]


class _Series:
    """Polynomial in (b, lam^alpha) truncated at graded degree dmax.

    Keys are (m, n) for the monomial b^m lam^(n alpha); values are
    complex coefficient arrays (or scalars for the theta series).
    """

    __slots__ = ("dmax", "terms")

    def __init__(self, dmax, terms=None):
        self.dmax = dmax
        self.terms = dict(terms or {})

    def add(self, key, coef):
        if _deg(key) > self.dmax:
            return
        if key in self.terms:
            self.terms[key] = self.terms[key] + coef
        else:
            self.terms[key] = coef

    def get(self, key):
        return self.terms.get(key)

    def plus(self, other):
        out = _Series(self.dmax, self.terms)
        for k, v in other.terms.items():
            out.add(k, v)
        return out

    def scaled(self, c):
        return _Series(self.dmax, {k: c * v for k, v in self.terms.items()})

    def shifted(self, key, c=1.0):
        """Multiply by c * b^m lam^(n alpha)."""
        out = _Series(self.dmax)
        for k, v in self.terms.items():
            out.add((k[0] + key[0], k[1] + key[1]), c * v)
        return out

    def mul(self, other):
        out = _Series(self.dmax)
        for k1, v1 in self.terms.items():
            d1 = _deg(k1)
            for k2, v2 in other.terms.items():
                if d1 + _deg(k2) <= self.dmax:
                    out.add((k1[0] + k2[0], k1[1] + k2[1]), v1 * v2)
        return out

    def conj(self):
        return _Series(self.dmax, {k: np.conj(v) for k, v in self.terms.items()})

    def mapped(self, fun):
        return _Series(self.dmax, {k: fun(v) for k, v in self.terms.items()})


def _series_ds(series, theta, alpha):
    """Derivative along the reduced flow b_s = theta - b^2, lam_s = -b lam."""
    out = _Series(series.dmax)
    for (m, n), coef in series.terms.items():
        out.add((m + 1, n), -(m + n * alpha) * coef)
        if m >= 1:
            for (tm, tn), tb in theta.terms.items():
                out.add((m - 1 + tm, n + tn), m * tb * coef)
    return out


def _series_nonlinearity(series, base, expo):
    """Graded expansion of |w|^(expo-1) w at w = base + (series - base term).

    base is the real positive array at the (0,0) coefficient.  Uses the
    double binomial expansion in (zeta, conj zeta) with generalized
    binomial coefficients; exact on the graded truncation since zeta
    has graded degree >= 1.
    """
    dmax = series.dmax
    zeta = _Series(dmax, {k: v for k, v in series.terms.items() if k != (0, 0)})
    amax = dmax  # zeta degree >= 1, so powers beyond dmax vanish anyway
    ones = _Series(dmax, {(0, 0): 1.0 + 0.0j})
    zpow = [ones]
    for _ in range(amax):
        nxt = zpow[-1].mul(zeta)
        if not nxt.terms:
            break
        zpow.append(nxt)
    czeta = zeta.conj()
    czpow = [ones]
    for _ in range(amax):
        nxt = czpow[-1].mul(czeta)
        if not nxt.terms:
            break
        czpow.append(nxt)
    s_up = (expo + 1.0) / 2.0   # |w|^(expo-1) w = w^((e+1)/2) conj(w)^((e-1)/2)
    s_dn = (expo - 1.0) / 2.0
    out = _Series(dmax)
    for a in range(len(zpow)):
        for c in range(len(czpow)):
            coef = binom(s_up, a) * binom(s_dn, c)
            if coef == 0.0:
                continue
            prod = zpow[a].mul(czpow[c])
            if not prod.terms:
                continue
            amp = coef * base ** (expo - a - c)
            for k, v in prod.terms.items():
                out.add(k, amp * v)
    return out


def _series_residual(pser, theta, gs, p, alpha):
    """Graded coefficients of the profile-equation residual."""
    grid = gs.grid
    q = q_exponent(grid.dim)
    base = gs.Q.values
    lap = grid.lap
    out = _series_ds(pser, theta, alpha).scaled(1j)
    out = out.plus(pser.mapped(lambda v: lap @ v))
    out = out.plus(pser.scaled(-1.0))
    out = out.plus(_series_nonlinearity(pser, base, 1.0 + q))
    out = out.plus(_series_nonlinearity(pser, base, p).shifted((0, 1)))
    ballast = grid.r ** 2 / 4.0
    out = out.plus(theta.mul(pser).mapped(lambda v: ballast * v))
    return out


def beta_from_norms(gs, p):
    """Leading theta coefficient from the ground-state norms:

        beta = 2 N (p-1) / (p+1) * ||Q||_{p+1}^{p+1} / ||r Q||_2^2.
    """
    return (2.0 * gs.dim * (p - 1.0) / (p + 1.0)) * gs.pnorm(p) \
        / gs.norms["r_moment"]


@dataclass
class ProfilePair:
    plus: np.ndarray
    minus: np.ndarray
    beta: float
    solvability_defect: float


@dataclass
class ProfileExpansion:
    """Profile expansion of order K with its evaluators.

    pairs[(j, k)] holds the real/imaginary corrector pair and the theta
    coefficient produced at that order; certificate records the graded
    residual left after the construction (everything of degree <= 2K+3
    should sit at solver-roundoff level).
    """

    gs: GroundStateData
    p: float
    alpha: float
    K: int
    pairs: dict
    certificate: dict = field(default_factory=dict)
    eps_weight: float = 0.5
    b_max: float = 0.5
    lam_max: float = 0.5

    @property
    def beta(self):
        return self.pairs[(0, 0)].beta

    @property
    def grid(self):
        return self.gs.grid

    def _check_params(self, b, lam):
        if not 0.0 < lam <= self.lam_max:
            raise ValueError(f"lam={lam} outside (0, {self.lam_max}]")
        if abs(b) > self.b_max:
            raise ValueError(f"|b|={abs(b)} exceeds {self.b_max}")

    def theta(self, b, lam):
        tot = 0.0
        for (j, k), pair in self.pairs.items():
            tot += pair.beta * b ** (2 * j) * lam ** ((k + 1) * self.alpha)
        return tot

    def theta_db(self, b, lam):
        tot = 0.0
        for (j, k), pair in self.pairs.items():
            if j > 0:
                tot += 2 * j * pair.beta * b ** (2 * j - 1) \
                    * lam ** ((k + 1) * self.alpha)
        return tot

    def theta_dlam(self, b, lam):
        tot = 0.0
        for (j, k), pair in self.pairs.items():
            e = (k + 1) * self.alpha
            tot += e * pair.beta * b ** (2 * j) * lam ** (e - 1.0)
        return tot

    def eval_profile(self, b, lam):
        self._check_params(b, lam)
        out = self.gs.Q.values.astype(complex)
        for (j, k), pair in self.pairs.items():
            amp = b ** (2 * j) * lam ** ((k + 1) * self.alpha)
            out = out + amp * (pair.plus + 1j * b * pair.minus)
        return out

    def db_profile(self, b, lam):
        self._check_params(b, lam)
        out = np.zeros_like(self.gs.Q.values, dtype=complex)
        for (j, k), pair in self.pairs.items():
            le = lam ** ((k + 1) * self.alpha)
            if j > 0:
                out = out + 2 * j * b ** (2 * j - 1) * le \
                    * (pair.plus + 1j * b * pair.minus)
            out = out + b ** (2 * j) * le * 1j * pair.minus
        return out

    def dlam_profile(self, b, lam):
        self._check_params(b, lam)
        out = np.zeros_like(self.gs.Q.values, dtype=complex)
        for (j, k), pair in self.pairs.items():
            e = (k + 1) * self.alpha
            out = out + e * b ** (2 * j) * lam ** (e - 1.0) \
                * (pair.plus + 1j * b * pair.minus)
        return out

    def residual_field(self, b, lam):
        """Pointwise residual of the profile equation at (b, lam).

        The s-derivative is taken along the reduced flow; the
        nonlinearities enter exactly (not through their truncated
        expansions), so this measures the true defect of the profile.
        """
        grid, q = self.grid, self.gs.q
        pp = self.eval_profile(b, lam)
        th = self.theta(b, lam)
        p_s = (th - b * b) * self.db_profile(b, lam) \
            - b * lam * self.dlam_profile(b, lam)
        out = 1j * p_s + grid.laplacian(pp) - pp + nonlin.f_crit(pp, q) \
            + lam ** self.alpha * nonlin.g_sub(pp, self.p) \
            + 0.25 * th * grid.r ** 2 * pp
        return out

    def weighted_residual_h1(self, b, lam):
        """Exponentially weighted H1 size of the residual field."""
        grid = self.grid
        psi = self.residual_field(b, lam)
        w = np.exp(self.eps_weight * grid.r)
        wpsi = w * psi
        wdpsi = w * (self.eps_weight * psi + grid.deriv(psi))
        return math.sqrt(grid.norm_sq(wpsi) + grid.norm_sq(wdpsi))

    def mass_deficit(self, b, lam):
        return self.grid.norm_sq(self.eval_profile(b, lam)) \
            - self.gs.norms["mass"]

    def rescaled_energy(self, b, lam, sign=+1):
        """Energy of the concentrated field lam^(-N/2) P(r/lam) with the
        quadratic phase of rate b (independent of the free phase)."""
        grid, q = self.grid, self.gs.q
        pp = self.eval_profile(b, lam)
        dw = grid.deriv(pp) - 0.5j * b * grid.r * pp
        kin = 0.5 * grid.norm_sq(dw)
        crit = grid.pnorm(pp, q + 2.0) / (q + 2.0)
        sub = grid.pnorm(pp, self.p + 1.0) / (self.p + 1.0)
        return (kin - crit - sign * lam ** self.alpha * sub) / lam ** 2

    def energy_identity_defect(self, b, lam):
        """Defect of the leading energy identity and its stated bound.

        Returns (defect, bound) for
          | 8 E - ||rQ||^2 (b^2/lam^2 - 2 beta/(2-alpha) lam^(alpha-2)) |
            <~  lam^alpha (b^2 + lam^alpha) / lam^2.
        """
        e_val = self.rescaled_energy(b, lam)
        kap = 2.0 * self.beta / (2.0 - self.alpha)
        main = self.gs.norms["r_moment"] \
            * (b * b / lam ** 2 - kap * lam ** (self.alpha - 2.0))
        defect = abs(8.0 * e_val - main)
        bound = lam ** self.alpha * (b * b + lam ** self.alpha) / lam ** 2
        return defect, bound

    # -- transport to the physical frame ---------------------------------

    def rescale_to_physical(self, b, lam, gamma, r_phys):
        """Concentrated profile lam^(-N/2) P(y) exp(-i b y^2/4 + i gamma)
        sampled at y = r_phys/lam (zero beyond the profile support)."""
        self._check_params(b, lam)
        pp = self.eval_profile(b, lam)
        y = np.asarray(r_phys) / lam
        vals = _even_spline(self.grid.r, pp)(y, extrapolate=False)
        vals = np.nan_to_num(vals, nan=0.0)
        phase = np.exp(-0.25j * b * y ** 2 + 1j * gamma)
        return lam ** (-self.grid.dim / 2.0) * vals * phase


def _even_spline(r, vals):
    """Quintic spline of a radial sample through its even extension."""
    rr = np.concatenate([-r[:0:-1], r])
    re = scipy.interpolate.InterpolatedUnivariateSpline(
        rr, np.concatenate([np.real(vals[:0:-1]), np.real(vals)]), k=5,
        ext="raise")
    im = scipy.interpolate.InterpolatedUnivariateSpline(
        rr, np.concatenate([np.imag(vals[:0:-1]), np.imag(vals)]), k=5,
        ext="raise")
    rmax = r[-1]

    def ev(y, extrapolate=True):
        y = np.asarray(y, dtype=float)
        inside = np.abs(y) <= rmax
        out = np.zeros(y.shape, dtype=complex)
        out[inside] = re(y[inside]) + 1j * im(y[inside])
        if not extrapolate:
            out[~inside] = np.nan
        return out

    return ev


def build_expansion(gs, p, K, alpha_min=0.05):
    """Construct the order-K profile expansion over the given ground state.

    Parameters
    ----------
    gs : GroundStateData
    p : float
        Lower-order power, 1 < p < 1 + 4/N (alpha >= alpha_min enforced).
    K : int
        Expansion order; the residual is of graded order K+2.

    Returns
    -------
    ProfileExpansion

    Notes
    -----
    Pairs are produced in order of j+k.  For each pair, the real
    corrector solves the invertible-block equation, the theta
    coefficient is fixed by solvability of the kernel-block equation
    (orthogonality of its right side to the kernel), and the imaginary
    corrector is gauge-fixed to be orthogonal to Q.
    """
    alpha = validate_exponents(gs.dim, p, alpha_min)
    if K < 1:
        raise ValueError("expansion order K must be >= 1")
    grid = gs.grid
    qv = gs.Q.values
    dmax = 2 * K + 3
    wc = gs.rho.values / 4.0
    wc_q = grid.inner(wc, qv)
    if wc_q <= 0:
        raise RuntimeError("ballast pairing must be positive")

    pser = _Series(dmax, {(0, 0): qv.astype(complex)})
    theta = _Series(dmax)
    pairs = {}
    # Within a degree class j+k = delta, the real corrector of (j+1, k-1)
    # feeds the kernel-block equation of (j, k) through the theta part of
    # the flow derivative, so pairs are solved in descending j with the
    # residual refreshed before each one.
    for delta in range(K + 1):
        for j in range(delta, -1, -1):
            k = delta - j
            resid = _series_residual(pser, theta, gs, p, alpha)
            key_re = (2 * j, k + 1)
            key_im = (2 * j + 1, k + 1)
            a_arr = resid.get(key_re)
            a_arr = np.real(a_arr) if a_arr is not None else np.zeros(grid.n)
            b_arr = resid.get(key_im)
            b_arr = np.imag(b_arr) if b_arr is not None else np.zeros(grid.n)
            p0 = gs.solve_lplus(a_arr)
            nu = 2 * j + (k + 1) * alpha
            beta_jk = (grid.inner(b_arr, qv) / nu - grid.inner(p0, qv)) / wc_q
            t_plus = p0 + beta_jk * wc
            t_minus, defect = gs.solve_lminus(b_arr - nu * t_plus)
            pser.add(key_re, t_plus.astype(complex))
            pser.add(key_im, 1j * t_minus)
            theta.add(key_re, beta_jk)
            pairs[(j, k)] = ProfilePair(t_plus, t_minus, beta_jk, abs(defect))

    resid = _series_residual(pser, theta, gs, p, alpha)
    scale = math.sqrt(gs.norms["mass"])
    cert = {"max_graded_residual": 0.0, "max_symmetry_defect": 0.0,
            "solvability": max(pr.solvability_defect for pr in pairs.values())}
    for key, coef in resid.terms.items():
        good = np.imag(coef) if key[0] % 2 == 0 else np.real(coef)
        bad_norm = math.sqrt(grid.norm_sq(coef)) / scale
        cert["max_graded_residual"] = max(cert["max_graded_residual"], bad_norm)
        cert["max_symmetry_defect"] = max(
            cert["max_symmetry_defect"],
            math.sqrt(grid.norm_sq(good)) / scale)
    return ProfileExpansion(gs=gs, p=p, alpha=alpha, K=K, pairs=pairs,
                            certificate=cert)
