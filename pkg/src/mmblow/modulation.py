"""Decomposition of an evolving field into (scale, quadratic phase,
gauge) plus a residual orthogonal to the profile directions.

u(t, r) = lam^(-N/2) (P + eps)(r/lam) e^(-i b r^2/(4 lam^2) + i gamma),

with eps constrained by (eps, i Lambda P) = (eps, |y|^2 P) = (eps, i rho) = 0.
The three parameters are found by a damped Newton iteration with the
analytic Jacobian of the pairings (chain rule through the rescaling).
On top of the per-snapshot decomposition the track assembles the
modulation-equation defects

    Mod = (lam_s/lam + b, b_s + b^2 - theta(b, lam), 1 - gamma_s),

the diagnostic energies H and S = lam^(-m) H, and the bootstrap
monitor for the smallness window the construction lives in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.interpolate

from .nonlin import f_crit, F_crit, g_sub, G_sub, q_exponent
from .radial import save_columns

__all__ = ["ParamState", "DiagnosticsConfig", "Decomposer",
           "ModulationTrack", "recompose", "track_trajectory", "track_mod",
           "diag_H", "diag_S", "bootstrap_monitor"]


@dataclass
class ParamState:
    lam: float
    b: float
    gamma: float
    s: float = 0.0
    t: float = 0.0


@dataclass
class DiagnosticsConfig:
    """Diagnostic exponents.  m is reported with every output since
    'large enough' is all the theory pins down; M must satisfy
    0 < M < min(1/2, 4/alpha - 2)."""

    m: float = 10.0
    eps_prime: float = 0.5
    M: float = 0.25
    K: int = 2
    re_eps_const: float = 3.0
    re_close_const: float = 3.0

    def validate(self, alpha):
        cap = min(0.5, 4.0 / alpha - 2.0)
        if not 0.0 < self.M < cap:
            raise ValueError(f"M={self.M} outside (0, {cap:.4g})")


def _even_spline(x, vals):
    xx = np.concatenate([-x[:0:-1], x])
    out = []
    for part in (np.real, np.imag):
        v = part(vals)
        ext = np.concatenate([v[:0:-1], v])
        out.append(scipy.interpolate.InterpolatedUnivariateSpline(xx, ext, k=5))
    return out


def recompose(exp, params, eps=None, r=None):
    """Physical field from parameters and (optional) residual."""
    if r is None:
        raise ValueError("need target radii")
    u = exp.rescale_to_physical(params.b, params.lam, params.gamma, r)
    if eps is not None and np.any(eps != 0.0):
        grid = exp.grid
        re_s, im_s = _even_spline(grid.r, eps)
        y = np.asarray(r, dtype=float) / params.lam
        vals = np.where(y <= grid.r[-1], re_s(y) + 1j * im_s(y), 0.0)
        phase = np.exp(-0.25j * params.b * y ** 2 + 1j * params.gamma)
        u = u + params.lam ** (-grid.dim / 2.0) * vals * phase
    return u


class Decomposer:
    """Newton solver for the three orthogonality conditions.

    freeze_profile_scale pins the scale fed to the profile expansion
    (the rescaling itself stays live); with the profile frozen the
    decomposition map commutes exactly with dilations, which is what
    the scaling-covariance property refers to.
    """

    def __init__(self, exp, tol=1e-11, max_iter=60, max_damping=6,
                 freeze_profile_scale=None):
        self.exp = exp
        self.grid = exp.grid
        self.tol = tol
        self.max_iter = max_iter
        self.max_damping = max_damping
        self.freeze = freeze_profile_scale
        g = self.grid
        self.rho = exp.gs.rho.values
        self._m3 = 1j * self.rho
        self._y2 = g.r ** 2

    def _pullback(self, r, u, lam, b, gamma):
        """lam^(N/2) u(lam y) e^(i b y^2/4 - i gamma) on the profile grid.

        The quadratic phase is removed on the physical grid first, so
        the interpolant only sees the slow envelope.
        """
        g = self.grid
        r = np.asarray(r, dtype=float)
        cut = np.searchsorted(r, lam * g.r[-1] * 1.0000001) + 2
        cut = min(cut, r.size)
        if cut < 8:
            raise ValueError("physical grid has no nodes under the profile")
        rw = r[:cut]
        uw = u[:cut] * np.exp(0.25j * b * rw ** 2 / lam ** 2)
        re_s, im_s = _even_spline(rw, uw)
        y = g.r * lam
        inside = y <= rw[-1]
        vals = np.where(inside, re_s(y) + 1j * im_s(y), 0.0)
        return lam ** (g.dim / 2.0) * vals * np.exp(-1j * gamma)

    def _markers(self, b, lam):
        exp, g = self.exp, self.grid
        lam_p = lam if self.freeze is None else self.freeze
        P = exp.eval_profile(b, lam_p)
        dPb = exp.db_profile(b, lam_p)
        if self.freeze is None:
            dPl = exp.dlam_profile(b, lam_p)
        else:
            dPl = np.zeros_like(P)
        m1 = 1j * g.lambda_op(P)
        m2 = self._y2 * P
        return P, dPb, dPl, m1, m2

    def _residual(self, eps, m1, m2):
        g = self.grid
        return np.array([g.inner(eps, m1), g.inner(eps, m2),
                         g.inner(eps, self._m3)])

    def decompose(self, r, u, guess):
        """Returns (ParamState, eps values on the profile grid, info).

        info carries the orthogonality residuals, iteration count and
        the residual scale used by the track invariant.
        """
        g = self.grid
        lam, b, gamma = float(guess.lam), float(guess.b), float(guess.gamma)
        if lam <= 0.0:
            raise ValueError("scale guess must be positive")
        P, dPb, dPl, m1, m2 = self._markers(b, lam)
        v = self._pullback(r, u, lam, b, gamma)
        eps = v - P
        res = self._residual(eps, m1, m2)
        best = np.max(np.abs(res))
        for it in range(self.max_iter):
            nrm = np.array([math.sqrt(g.norm_sq(m1)),
                            math.sqrt(g.norm_sq(m2)),
                            math.sqrt(g.norm_sq(self._m3))])
            # quadrature roundoff floors the residual at ~eps_mach * ||v||
            floor = 2e-14 * math.sqrt(g.norm_sq(v))
            eps_norm = math.sqrt(g.norm_sq(eps))
            if np.all(np.abs(res) <= nrm * (self.tol * eps_norm + floor)):
                break
            # analytic Jacobian
            de_dg = -1j * v
            de_db = 0.25j * self._y2 * v - dPb
            de_dl = (g.lambda_op(v) - 0.5j * b * self._y2 * v) / lam - dPl
            dm1_db, dm1_dl = 1j * g.lambda_op(dPb), 1j * g.lambda_op(dPl)
            dm2_db, dm2_dl = self._y2 * dPb, self._y2 * dPl
            J = np.empty((3, 3))
            for i, (m, dmb, dml) in enumerate(
                    ((m1, dm1_db, dm1_dl), (m2, dm2_db, dm2_dl),
                     (self._m3, None, None))):
                J[i, 0] = g.inner(de_dl, m) + (
                    g.inner(eps, dml) if dml is not None else 0.0)
                J[i, 1] = g.inner(de_db, m) + (
                    g.inner(eps, dmb) if dmb is not None else 0.0)
                J[i, 2] = g.inner(de_dg, m)
            try:
                delta = np.linalg.solve(J, -res)
            except np.linalg.LinAlgError:
                raise ValueError("decomposition Jacobian is singular "
                                 "(field outside the profile tube)")
            stepsize = 1.0
            for _ in range(self.max_damping + 1):
                lam_n = lam + stepsize * delta[0]
                b_n = b + stepsize * delta[1]
                gam_n = gamma + stepsize * delta[2]
                if lam_n > 0.0:
                    try:
                        P, dPb, dPl, m1, m2 = self._markers(b_n, lam_n)
                        v = self._pullback(r, u, lam_n, b_n, gam_n)
                    except ValueError:
                        stepsize *= 0.5
                        continue
                    eps_n = v - P
                    res_n = self._residual(eps_n, m1, m2)
                    if np.max(np.abs(res_n)) < best or stepsize <= 1.0 / 16:
                        break
                stepsize *= 0.5
            else:
                raise ValueError("decomposition Newton step failed to damp")
            lam, b, gamma = lam_n, b_n, gam_n
            eps, res = eps_n, res_n
            best = min(best, np.max(np.abs(res)))
        else:
            raise ValueError("decomposition Newton did not converge "
                             "(field outside the profile tube)")
        # continuous gauge: nearest 2-pi branch to the guess
        gamma += 2.0 * math.pi * round((guess.gamma - gamma)
                                       / (2.0 * math.pi))
        nrm = np.array([math.sqrt(g.norm_sq(m1)), math.sqrt(g.norm_sq(m2)),
                        math.sqrt(g.norm_sq(self._m3))])
        # residual scale: the residual norm the tube admits; floored so
        # near-exact data (eps at interpolation noise) is not divided
        # by an arbitrarily small number
        eps_scale = max(math.sqrt(g.norm_sq(eps)),
                        1e-4 * math.sqrt(g.norm_sq(P)))
        info = {"iterations": it + 1,
                "ortho": np.abs(res),
                "ortho_rel": np.abs(res) / (nrm * eps_scale)}
        return ParamState(lam=lam, b=b, gamma=gamma, s=guess.s,
                          t=guess.t), eps, info


def diag_H(exp, eps, b, lam, sign=1.0):
    """Quadratic-plus-remainder energy of the residual:
    1/2 ||eps||ـH1^2 + b^2 |||y| eps||^2 - the nonlinear remainders."""
    g = exp.grid
    P = exp.eval_profile(b, lam)
    q = q_exponent(g.dim)
    total = 0.5 * g.h1_norm_sq(eps) + b * b * g.moment_sq(eps, 1)
    rem_f = (F_crit(P + eps, q) - F_crit(P, q)
             - np.real(f_crit(P, q) * np.conj(eps)))
    rem_g = (G_sub(P + eps, exp.p) - G_sub(P, exp.p)
             - np.real(g_sub(P, exp.p) * np.conj(eps)))
    total -= g.integrate(rem_f) + sign * lam ** exp.alpha * g.integrate(rem_g)
    return float(total)


def diag_S(exp, eps, b, lam, cfg=None, sign=1.0):
    m = (cfg.m if cfg is not None else 10.0)
    return lam ** (-m) * diag_H(exp, eps, b, lam, sign=sign)


def _window_deriv(x, y, i, window, loglog):
    """Derivative dy/dx at x[i] by a quadratic fit over a sliding
    window; in log-log mode the fit runs on (log x, log|y|) so exact
    power laws differentiate exactly."""
    n = x.size
    half = window // 2
    lo = max(0, min(i - half, n - window))
    hi = min(n, lo + window)
    xs, ys = x[lo:hi], y[lo:hi]
    if loglog:
        if np.any(ys <= 0.0) or np.any(xs <= 0.0):
            loglog = False
    if loglog:
        cs = np.polyfit(np.log(xs), np.log(ys), 2)
        d_log = 2.0 * cs[0] * math.log(x[i]) + cs[1]
        return d_log * y[i] / x[i]
    cs = np.polyfit(xs - x[i], ys, min(2, xs.size - 1))
    return cs[-2] if cs.size >= 2 else 0.0


def _derivative_series(x, y, window=7, loglog=True):
    # long clean series: differentiate a quintic interpolant in log x
    # (h^4-accurate, no sliding-window truncation plateau); the window
    # fit remains the fallback for short series and sign changes
    if x.size >= 8:
        lx = np.log(x)
        if loglog and np.all(y > 0.0):
            spl = scipy.interpolate.InterpolatedUnivariateSpline(
                lx, np.log(y), k=5)
            return spl.derivative()(lx) * y / x
        if not loglog:
            spl = scipy.interpolate.InterpolatedUnivariateSpline(lx, y, k=5)
            return spl.derivative()(lx) / x
    return np.array([_window_deriv(x, y, i, window, loglog)
                     for i in range(x.size)])


@dataclass
class ModulationTrack:
    states: list = dc_field(default_factory=list)
    eps_list: list = dc_field(default_factory=list)
    eps_H1: list = dc_field(default_factory=list)
    eps_weighted: list = dc_field(default_factory=list)
    ortho: list = dc_field(default_factory=list)
    ortho_rel: list = dc_field(default_factory=list)
    eps_q: list = dc_field(default_factory=list)
    H: list = dc_field(default_factory=list)
    S: list = dc_field(default_factory=list)
    s_proxy: np.ndarray | None = None
    mod: np.ndarray | None = None
    boot: dict | None = None

    def param_arrays(self):
        st = self.states
        return {k: np.array([getattr(p, k) for p in st])
                for k in ("lam", "b", "gamma", "s", "t")}

    def to_csv(self, path):
        a = self.param_arrays()
        mod = self.mod if self.mod is not None else np.full((3, len(self.states)), np.nan)
        boot = self.boot or {}
        b1 = np.asarray(boot.get("boot1_ok", np.zeros(len(self.states))), dtype=float)
        b2 = np.asarray(boot.get("boot2_ok", np.zeros(len(self.states))), dtype=float)
        save_columns(path, t=a["t"], s=a["s"], **{"lambda": a["lam"]},
                     b=a["b"], gamma=a["gamma"],
                     eps_H1=np.asarray(self.eps_H1),
                     eps_weighted=np.asarray(self.eps_weighted),
                     mod1=mod[0], mod2=mod[1], mod3=mod[2],
                     H=np.asarray(self.H), S=np.asarray(self.S),
                     boot1=b1, boot2=b2)


def track_trajectory(traj, exp, cfg=None, guess0=None, sign=1.0,
                     stride=1):
    """Decompose every stride-th snapshot of a Trajectory and assemble
    the modulation track.

    The stepper's rescaled clock uses the sup-norm scale proxy; here it
    is corrected to the decomposed scale by weighting each increment
    with the (proxy/lam)^2 ratio of the bracketing snapshots.
    """
    cfg = cfg or DiagnosticsConfig(K=exp.K)
    dec = Decomposer(exp)
    g = exp.grid
    Q = exp.gs.Q.values
    track = ModulationTrack()
    snaps = traj.snapshots[::stride]
    # the loop-end snapshot can nearly coincide with the last cadence
    # level; drop the earlier of such a pair
    if (len(snaps) > 1 and abs(snaps[-1]["s"] - snaps[-2]["s"])
            < 0.01 * abs(snaps[-1]["s"] - snaps[0]["s"]) / len(snaps)):
        snaps = snaps[:-2] + snaps[-1:]
    if guess0 is None:
        guess0 = ParamState(lam=snaps[0]["lam_proxy"], b=0.0, gamma=0.0)
    guess = guess0
    ratios, s_proxy = [], []
    for snap in snaps:
        guess = ParamState(lam=guess.lam, b=guess.b, gamma=guess.gamma,
                           s=snap["s"], t=snap["t"])
        params, eps, info = dec.decompose(snap["r"], snap["values"], guess)
        track.states.append(params)
        track.eps_list.append(eps)
        track.eps_H1.append(math.sqrt(g.h1_norm_sq(eps)))
        track.eps_weighted.append(math.sqrt(g.moment_sq(eps, 1)))
        track.ortho.append(info["ortho"])
        track.ortho_rel.append(info["ortho_rel"])
        track.eps_q.append(g.inner(eps, Q))
        track.H.append(diag_H(exp, eps, params.b, params.lam, sign=sign))
        track.S.append(params.lam ** (-cfg.m) * track.H[-1])
        ratios.append((snap["lam_proxy"] / params.lam) ** 2)
        s_proxy.append(snap["s"])
        guess = params
    # corrected rescaled clock
    s_proxy = np.asarray(s_proxy)
    ratios = np.asarray(ratios)
    ds = np.diff(s_proxy) * 0.5 * (ratios[1:] + ratios[:-1])
    s_vals = np.concatenate([[s_proxy[0]], s_proxy[0] + np.cumsum(ds)])
    for p, s in zip(track.states, s_vals):
        p.s = float(s)
    track.s_proxy = s_proxy
    if s_proxy.size > 1 and s_proxy[-1] < s_proxy[0]:
        # away-from-singularity run: store in increasing-clock order
        for name in ("states", "eps_list", "eps_H1", "eps_weighted",
                     "ortho", "ortho_rel", "eps_q", "H", "S"):
            getattr(track, name).reverse()
        track.s_proxy = s_proxy[::-1].copy()
    track_mod(track, exp)
    return track


def track_mod(track, exp, window=7):
    """Modulation-equation defects from the parameter series."""
    a = track.param_arrays()
    if a["s"].size < 3:
        raise ValueError("need at least 3 snapshots")
    lam_s = _derivative_series(a["s"], a["lam"], window, loglog=True)
    b_s = _derivative_series(a["s"], np.abs(a["b"]), window, loglog=True)
    b_s *= np.sign(a["b"])
    gam_s = _derivative_series(a["s"], a["gamma"], window, loglog=False)
    theta = np.array([exp.theta(b, lam)
                      for b, lam in zip(a["b"], a["lam"])])
    track.mod = np.vstack([lam_s / a["lam"] + a["b"],
                           b_s + a["b"] ** 2 - theta,
                           1.0 - gam_s])
    return track


def richardson_track(coarse, fine, exp, cfg=None, sign=1.0):
    """Cancel the leading mesh-resolution bias from a pair of tracks.

    Parameters
    ----------
    coarse, fine : ModulationTrack
        Tracks of the same physical run integrated at node densities K
        and 2K.  The stepper is second order in the node spacing, so
        every decomposed series carries a bias proportional to 1/K^2
        that plateaus well above the true residual decay.
    exp : profile expansion used for the decompositions.

    Returns
    -------
    ModulationTrack
        Series sampled at the coarse track's rescaled-clock levels and
        combined as (4*fine - coarse)/3, which removes the 1/K^2 term;
        defects are recomputed from the combined parameter series.
        Field-level data (eps_list) is not combined across grids and is
        left empty.

    Notes
    -----
    The snapshot labels are the raw proxy-clock values, identical in
    meaning for both runs; the fine series are spline-sampled at the
    coarse labels so no label jitter from discrete step boundaries
    enters the combination.
    """
    from scipy.interpolate import CubicSpline
    cfg = cfg or DiagnosticsConfig(K=exp.K)
    if coarse.s_proxy is None or fine.s_proxy is None:
        raise ValueError("tracks must carry their proxy-clock labels")
    xc, xf = coarse.s_proxy, fine.s_proxy
    keep = (xc >= xf[0]) & (xc <= xf[-1])
    x = xc[keep]
    if x.size < 8:
        raise ValueError("tracks overlap on fewer than 8 snapshots")

    ac = coarse.param_arrays()
    af = fine.param_arrays()

    def combine(zc, zf):
        zc = np.asarray(zc, dtype=float)[keep]
        zf = CubicSpline(xf, np.asarray(zf, dtype=float))(x)
        return (4.0 * zf - zc) / 3.0

    lam = combine(ac["lam"], af["lam"])
    b = combine(ac["b"], af["b"])
    gam = combine(ac["gamma"], af["gamma"])
    s = combine(ac["s"], af["s"])
    t = combine(ac["t"], af["t"])
    eH2 = np.maximum(combine(np.asarray(coarse.eps_H1) ** 2,
                             np.asarray(fine.eps_H1) ** 2), 0.0)
    eW2 = np.maximum(combine(np.asarray(coarse.eps_weighted) ** 2,
                             np.asarray(fine.eps_weighted) ** 2), 0.0)
    eps_q = combine(coarse.eps_q, fine.eps_q)
    H = combine(coarse.H, fine.H)

    out = ModulationTrack()
    out.states = [ParamState(lam=float(l), b=float(bb), gamma=float(gg),
                             s=float(ss), t=float(tt))
                  for l, bb, gg, ss, tt in zip(lam, b, gam, s, t)]
    out.eps_H1 = list(np.sqrt(eH2))
    out.eps_weighted = list(np.sqrt(eW2))
    out.eps_q = list(eps_q)
    out.H = list(H)
    out.S = list(lam ** (-cfg.m) * H)
    # convergence diagnostics are per-decomposition; carry the fine ones
    idx = np.clip(np.searchsorted(xf, x), 0, len(fine.ortho) - 1)
    out.ortho = [fine.ortho[i] for i in idx]
    out.ortho_rel = [fine.ortho_rel[i] for i in idx]
    out.s_proxy = x
    track_mod(out, exp)
    return out


def bootstrap_monitor(track, constants, cfg=None):
    """Per-snapshot checks of the smallness window.

    boot1: ||eps||_H1^2 + b^2 |||y| eps||^2 < s^(-2K)
    boot2: |lam^(a/2)/lam_app^(a/2) - 1| + |b/b_app - 1| < s^(-M)
    re1/re2: the sharpened re-estimation bounds with explicit constants.
    Reports per-check pass arrays and the first violation s (or None).
    """
    from .law import lambda_app, b_app
    cfg = cfg or DiagnosticsConfig()
    cfg.validate(constants.alpha)
    a = track.param_arrays()
    s = a["s"]
    eps_sq = (np.asarray(track.eps_H1) ** 2
              + a["b"] ** 2 * np.asarray(track.eps_weighted) ** 2)
    half_a = 0.5 * constants.alpha
    close = (np.abs((a["lam"] / lambda_app(s, constants)) ** half_a - 1.0)
             + np.abs(a["b"] / b_app(s, constants) - 1.0))
    K, M = cfg.K, cfg.M
    checks = {
        "boot1_ok": eps_sq < s ** (-2 * K),
        "boot2_ok": close < s ** (-M),
        "re_eps_ok": eps_sq < cfg.re_eps_const * s ** (-(2 * K + 2)),
        "re_close_ok": close < cfg.re_close_const
        * (s ** -0.5 + s ** (2.0 - 4.0 / constants.alpha)),
    }
    report = {"s": s, "eps_sq": eps_sq, "closeness": close,
              "K": K, "M": M,
              "re_eps_const": cfg.re_eps_const,
              "re_close_const": cfg.re_close_const}
    report.update(checks)
    report["first_violation"] = {}
    for name, ok in checks.items():
        bad = np.nonzero(~ok)[0]
        report["first_violation"][name] = (
            None if bad.size == 0 else float(s[bad[0]]))
    report["all_ok"] = all(bool(np.all(ok)) for ok in checks.values())
    track.boot = report
    return report
