"""Asymptotic scaling laws of the blow-up and initial-data calibration.

The reduced flow  b_s = theta(b, lam) ~ beta lam^alpha - ...,
lam_s/lam = -b  admits, at leading order, the explicit solution

    lam_app(s) = ((alpha/2) sqrt(2 beta/(2-alpha)))^(-2/alpha) s^(-2/alpha),
    b_app(s)   = 2/(alpha s),

and the conserved-energy relation selects, for each energy E0 and
rescaled time s1, the starting point (lam1, b1) through the strictly
monotone integral

    F(lam) = integral over mu in [lam, lam0] of
             mu^(-alpha/2 - 1) (2 beta/(2-alpha) + C0 mu^(2-alpha))^(-1/2),
    C0 = 8 E0 / ||r Q||^2,

with F(lam1) = s1 and the concentrated-profile energy at (lam1, b1)
equal to E0.  In the original time variable the blow-up rates are

    lam(t) ~ C_lambda |t|^(2/(4-alpha)),   b(t) ~ C_b |t|^(alpha/(4-alpha)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.optimize

__all__ = [
    "LawConstants", "make_constants", "lambda_app", "b_app",
    "F_of_lambda", "F_inverse", "F_closed_form_zero_energy",
    "F_asymptote_defect", "initial_params", "initial_closeness",
    "time_maps", "TimeMaps",
]


@dataclass(frozen=True)
class LawConstants:
    """Derived constants of the reduced blow-up law.

    kap = 2 beta/(2-alpha); c_app is the prefactor of lam_app;
    c_time the prefactor of |t| = c_time s^(-(4-alpha)/alpha);
    c_lambda, c_b the physical-time rate prefactors.
    """

    dim: int
    p: float
    alpha: float
    beta: float
    r_moment: float
    E0: float
    lambda0: float
    C0: float
    kap: float
    c_app: float
    c_time: float
    c_lambda: float
    c_b: float


def make_constants(exp=None, E0=0.0, lambda0=0.1, *, dim=None, p=None,
                   alpha=None, beta=None, r_moment=None):
    """Build LawConstants from a ProfileExpansion (or explicit values).

    lambda0 is the upper endpoint of the calibration integral; it must
    stay inside the positivity region of the bracket when E0 < 0.
    """
    if exp is not None:
        dim, p, alpha, beta = exp.gs.dim, exp.p, exp.alpha, exp.beta
        r_moment = exp.gs.norms["r_moment"]
    if None in (dim, p, alpha, beta, r_moment):
        raise ValueError("need either an expansion or all explicit constants")
    if not 0.0 < alpha < 2.0:
        raise ValueError("alpha outside (0, 2)")
    if lambda0 <= 0.0:
        raise ValueError("lambda0 must be positive")
    kap = 2.0 * beta / (2.0 - alpha)
    c0 = 8.0 * E0 / r_moment
    if kap + c0 * lambda0 ** (2.0 - alpha) <= 0.0:
        cap = (kap / abs(c0)) ** (1.0 / (2.0 - alpha))
        raise ValueError(
            f"lambda0={lambda0} outside the law's positivity region; "
            f"need lambda0 < {cap:.6g} for E0={E0}")
    root = 0.5 * alpha * math.sqrt(kap)
    c_app = root ** (-2.0 / alpha)
    c_time = (alpha / (4.0 - alpha)) * root ** (-4.0 / alpha)
    c_lambda = c_time ** (-2.0 / (4.0 - alpha)) * root ** (-2.0 / alpha)
    c_b = (2.0 / alpha) * c_time ** (-alpha / (4.0 - alpha))
    return LawConstants(dim=dim, p=p, alpha=alpha, beta=beta,
                        r_moment=r_moment, E0=E0, lambda0=lambda0,
                        C0=c0, kap=kap, c_app=c_app, c_time=c_time,
                        c_lambda=c_lambda, c_b=c_b)


def lambda_app(s, c):
    return c.c_app * np.asarray(s, dtype=float) ** (-2.0 / c.alpha)


def b_app(s, c):
    return 2.0 / (c.alpha * np.asarray(s, dtype=float))


def reduced_rhs_defect(s, c):
    """Residual of (b_s + b^2 - beta lam^alpha, lam_s/lam + b) on the
    explicit pair (lam_app, b_app); zero identically, kept as a check."""
    s = float(s)
    lam, b = lambda_app(s, c), b_app(s, c)
    b_s = -2.0 / (c.alpha * s ** 2)
    lam_s_over_lam = -2.0 / (c.alpha * s)
    return (b_s + b ** 2 - c.beta * lam ** c.alpha, lam_s_over_lam + b)


def _bracket(c, lam):
    val = c.kap + c.C0 * lam ** (2.0 - c.alpha)
    if val <= 0.0:
        raise ValueError("calibration integrand left its positivity region")
    return val


def F_of_lambda(lam, c):
    """Strictly decreasing rescaled-time integral; F(lambda0) = 0.

    Integrated in the variable u = mu^(-alpha/2), which removes the
    power singularity at small scales: the integrand is then smooth and
    bounded by kap^(-1/2).
    """
    if not 0.0 < lam <= c.lambda0:
        raise ValueError(f"lam={lam} outside (0, lambda0={c.lambda0}]")
    _bracket(c, lam)
    ex = 2.0 * (2.0 - c.alpha) / c.alpha
    rk = math.sqrt(c.kap)

    # integrand -> 1/sqrt(kap) at small scales; integrate only the
    # decaying difference so the result stays well-conditioned when the
    # interval spans many decades
    def correction(u):
        return 1.0 / math.sqrt(c.kap + c.C0 * u ** (-ex)) - 1.0 / rk

    lo = c.lambda0 ** (-0.5 * c.alpha)
    hi = lam ** (-0.5 * c.alpha)
    val = (hi - lo) / rk
    if c.C0 != 0.0:
        # beyond u_star the relative perturbation is <= 1/2 and the
        # binomial series in C0 u^(-ex)/kap converges geometrically
        u_star = (2.0 * abs(c.C0) / c.kap) ** (1.0 / ex)
        cut = min(hi, max(lo, u_star))
        if cut > lo:
            corr, _ = scipy.integrate.quad(correction, lo, cut,
                                           epsabs=1e-13, epsrel=1e-12,
                                           limit=200)
            val += corr
        if hi > cut:
            val += _series_tail(c.C0 / c.kap, ex, cut, hi) / rk
    return (2.0 / c.alpha) * val


def _series_tail(ratio, ex, a, b):
    """integral over [a, b] of (1 + ratio u^(-ex))^(-1/2) - 1, valid for
    |ratio| a^(-ex) <= 1/2."""
    total = 0.0
    coef = 1.0
    for n in range(1, 400):
        coef *= (0.5 - n) / n  # binomial(-1/2, n) accumulated
        pw = n * ex
        if abs(pw - 1.0) < 1e-12:
            block = math.log(b / a)
        else:
            block = (b ** (1.0 - pw) - a ** (1.0 - pw)) / (1.0 - pw)
        term = coef * ratio ** n * block
        total += term
        if abs(term) < 1e-17 * (abs(total) + 1e-300):
            return total
    raise RuntimeError("series tail failed to converge")


def F_closed_form_zero_energy(lam, c):
    """F at C0 = 0: (2/alpha)(lam^(-alpha/2) - lambda0^(-alpha/2))/sqrt(kap)."""
    return (2.0 / c.alpha) * (lam ** (-0.5 * c.alpha)
                              - c.lambda0 ** (-0.5 * c.alpha)) / math.sqrt(c.kap)


def F_asymptote_defect(lam, c):
    """Distance of F from its small-scale asymptote, with the stated bound.

    Returns (defect, bound) for
      |F(lam) - 2/(alpha lam^(alpha/2) sqrt(kap))| <~
          lam^(-alpha/4) + lam^(2 - 3 alpha/2).
    """
    asym = 2.0 / (c.alpha * lam ** (0.5 * c.alpha) * math.sqrt(c.kap))
    defect = abs(F_of_lambda(lam, c) - asym)
    bound = lam ** (-0.25 * c.alpha) + lam ** (2.0 - 1.5 * c.alpha)
    return defect, bound


def F_inverse(s, c):
    """The scale lam with F(lam) = s (bracketed root in log-scale)."""
    if s <= 0.0:
        raise ValueError("rescaled time must be positive")
    lo_log = math.log(c.lambda0)
    # expand downward until F exceeds s
    width = 1.0
    while F_of_lambda(math.exp(lo_log - width), c) < s:
        width *= 2.0
        if width > 80.0:
            raise RuntimeError("no bracket for the scale equation")
    sol = scipy.optimize.brentq(
        lambda x: F_of_lambda(min(math.exp(x), c.lambda0), c) - s,
        lo_log - width, lo_log, xtol=1e-15, rtol=8.9e-16)
    return min(math.exp(sol), c.lambda0)


def energy_matched_b(exp, c, lam, b_hi=0.5):
    """The quadratic-phase strength b >= 0 at which the profile at
    scale lam carries exactly the target energy E0."""

    def en(b):
        return exp.rescaled_energy(b, lam) - c.E0

    cap = min(b_hi, exp.b_max)
    guess = math.sqrt(max(c.kap * lam ** c.alpha + c.C0 * lam ** 2, 0.0))
    bs = np.unique(np.concatenate([
        np.linspace(0.0, cap, 41),
        np.linspace(min(0.5 * guess, cap), min(1.5 * guess + 1e-12, cap),
                    11)]))
    vals = np.array([en(b) for b in bs])
    sign_change = np.nonzero(np.diff(np.sign(vals)) != 0)[0]
    if sign_change.size == 0:
        raise ValueError(
            f"energy E0={c.E0} unattainable at lam={lam:.6g}: "
            f"profile energies span [{vals.min() + c.E0:.6g}, "
            f"{vals.max() + c.E0:.6g}] over b in [0, {bs[-1]:.3g}]")
    i = sign_change[0]
    return scipy.optimize.brentq(en, bs[i], bs[i + 1],
                                 xtol=1e-15, rtol=8.9e-16)


def invariant_defect(exp, c, lam):
    """Relative distance of the energy-matched b from the reduced-flow
    invariant b^2 = kap lam^alpha + C0 lam^2; the size of the
    subleading profile-energy terms at scale lam."""
    b = energy_matched_b(exp, c, lam)
    return abs(b * b / (c.kap * lam ** c.alpha + c.C0 * lam ** 2) - 1.0)


def initial_params(exp, c, s1, s1_min=50.0, b_hi=0.5):
    """Starting scales for a run entering the trap at rescaled time s1.

    Solves F(lam1) = s1 and then matches the concentrated-profile
    energy to E0 in b.  The guard s1 >= s1_min reflects the asymptotic
    regime the construction lives in; callers may relax it explicitly
    (the self-healing of the law makes moderately small s1 usable).

    Returns (lam1, b1).
    """
    if s1 < s1_min:
        raise ValueError(f"s1={s1} below s1_min={s1_min}; "
                         "pass a smaller s1_min to run this close to the cap")
    lam1 = F_inverse(s1, c)
    return lam1, energy_matched_b(exp, c, lam1, b_hi=b_hi)


def initial_closeness(lam1, b1, s1, c):
    """Distance of the calibrated start from the explicit law,

        |lam1^(alpha/2)/lam_app(s1)^(alpha/2) - 1| + |b1/b_app(s1) - 1|.
    """
    lam_ratio = (lam1 / lambda_app(s1, c)) ** (0.5 * c.alpha)
    return abs(lam_ratio - 1.0) + abs(b1 / b_app(s1, c) - 1.0)


def s1_of_t1(t1, c):
    """Rescaled start time from physical start time t1 < 0."""
    if t1 >= 0.0:
        raise ValueError("t1 must be negative (blow-up at t = 0)")
    return abs(t1 / c.c_time) ** (-c.alpha / (4.0 - c.alpha))


def rate_lambda_of_t(t, c):
    """Leading-order scale law C_lambda |t|^(2/(4-alpha))."""
    return c.c_lambda * np.abs(t) ** (2.0 / (4.0 - c.alpha))


def rate_b_of_t(t, c):
    return c.c_b * np.abs(t) ** (c.alpha / (4.0 - c.alpha))


class TimeMaps:
    """Monotone maps between physical time and rescaled time along a
    trajectory, built by trapezoid accumulation of lam^(-2).

    Until a trajectory is fed, the maps fall back to the pure-law
    correspondence t(s) = -c_time s^(-(4-alpha)/alpha).
    """

    def __init__(self, t1, s1, c):
        self.t1 = float(t1)
        self.s1 = float(s1)
        self.c = c
        self._t = None
        self._s = None

    def feed(self, t_arr, lam_arr):
        t_arr = np.asarray(t_arr, dtype=float)
        lam_arr = np.asarray(lam_arr, dtype=float)
        if t_arr.ndim != 1 or t_arr.size < 2 or t_arr.size != lam_arr.size:
            raise ValueError("need matching 1-d arrays with >= 2 samples")
        if np.any(np.diff(t_arr) <= 0.0):
            raise ValueError("time samples must increase")
        if np.any(lam_arr <= 0.0):
            raise ValueError("scales must be positive")
        inv2 = lam_arr ** (-2.0)
        s = self.s1 + np.concatenate(
            [[0.0], np.cumsum(0.5 * (inv2[1:] + inv2[:-1]) * np.diff(t_arr))])
        self._t, self._s = t_arr, s
        return self

    def s_of_t(self, t):
        if self._t is None:
            ex = -(4.0 - self.c.alpha) / self.c.alpha
            return (np.abs(t) / self.c.c_time) ** (1.0 / ex)
        return np.interp(t, self._t, self._s)

    def t_of_s(self, s):
        if self._t is None:
            ex = -(4.0 - self.c.alpha) / self.c.alpha
            return -self.c.c_time * np.asarray(s, dtype=float) ** ex
        return np.interp(s, self._s, self._t)


def time_maps(t1, c, feed=None):
    """(s1, TimeMaps) for a run starting at physical time t1 < 0."""
    s1 = s1_of_t1(t1, c)
    maps = TimeMaps(t1, s1, c)
    if feed is not None:
        maps.feed(*feed)
    return s1, maps
