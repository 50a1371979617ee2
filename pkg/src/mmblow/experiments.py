"""Experiment drivers: scripted verification suites and rate fits.

Everything here is plumbing around the physics modules: a driver
assembles the relevant computations for one named suite, writes CSV
and plain-text plot data plus a JSON summary into its own directory,
and reports pass/fail of its embedded assertions.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.optimize

from . import law as law_mod
from .radial import save_columns
from .groundstate import ground_state, coercivity_mu
from .blowup_profile import build_expansion
from .evolve import RunConfig, run
from .modulation import DiagnosticsConfig, track_trajectory

__all__ = ["RateFitResult", "ExperimentSpec", "ExperimentError",
           "rate_fit", "fit_blowup_time", "run_experiment",
           "corrupt_track", "rate_exponents"]

KINDS = ("verify-statics", "verify-profile", "verify-law", "rate-fit",
         "sweep")


class ExperimentError(RuntimeError):
    """A suite could not be executed as specified."""


@dataclass(frozen=True)
class RateFitResult:
    exponent: float
    constant: float
    r2: float
    window: tuple

    def as_dict(self):
        return {"exponent": self.exponent, "constant": self.constant,
                "r2": self.r2, "window": list(self.window)}


def _series_arrays(series):
    arr = np.asarray(series, dtype=float)
    if arr.ndim == 2 and arr.shape[0] == 2 and arr.shape[1] != 2:
        arr = arr.T
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("series must be a list of (t, value) pairs")
    return arr[:, 0], arr[:, 1]


def rate_fit(series, t_star=0.0):
    """Power-law fit value = constant * |t - t_star|^exponent.

    Parameters
    ----------
    series : sequence of (t, value) pairs
        At least 20 points whose |t - t_star| spans a decade; values
        must be positive.
    t_star : float
        Reference time of the power law (0 unless the caller has
        located the run's own singular time, e.g. with
        fit_blowup_time).

    Returns
    -------
    RateFitResult
        Least-squares slope and prefactor on (log|t - t_star|,
        log value), the r^2 of that line, and the (max, min) of the
        fitted values.
    """
    t, v = _series_arrays(series)
    if t.size < 20:
        raise ValueError("need at least 20 samples")
    dist = np.abs(t - t_star)
    if np.any(dist <= 0.0) or np.any(v <= 0.0):
        raise ValueError("samples must avoid t_star and be positive")
    if dist.max() / dist.min() < 10.0:
        raise ValueError("insufficient decade span")
    x, y = np.log(dist), np.log(v)
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icept), *_ = np.linalg.lstsq(A, y, rcond=None)
    r = np.corrcoef(x, y)[0, 1]
    return RateFitResult(exponent=float(slope),
                         constant=float(math.exp(icept)),
                         r2=float(r * r),
                         window=(float(v.max()), float(v.min())))


def fit_blowup_time(series, expand=0.3):
    """Reference time that makes the series closest to a power law.

    A run launched from profile-shaped data does not collapse exactly
    at time 0: the clock of the dynamics heals the initial-data
    truncation, shifting the singular time.  This locates t_star by
    maximizing the r^2 of the log-log line over a bracket past the last
    sample.
    """
    t, v = _series_arrays(series)
    if np.any(v <= 0.0):
        raise ValueError("values must be positive")
    lo, hi = t.min(), t.max()
    span = hi - lo
    if span <= 0.0:
        raise ValueError("need a nondegenerate time window")
    y = np.log(v)

    def neg_r2(ts):
        x = np.log(np.abs(ts - t))
        r = np.corrcoef(x, y)[0, 1]
        return -r * r

    res = scipy.optimize.minimize_scalar(
        neg_r2, bounds=(hi + 1e-12 * span, hi + expand * span),
        method="bounded", options={"xatol": 1e-14 * span})
    return float(res.x)


def rate_exponents(dim, p):
    """Theoretical decay exponents (lambda, b) in |t| for (dim, p)."""
    alpha = 2.0 - dim * (p - 1.0) / 2.0
    return 2.0 / (4.0 - alpha), alpha / (4.0 - alpha)


def corrupt_track(track, index, K=2, factor=10.0):
    """Copy of a track with the residual norms at one snapshot scaled
    by factor * s^K — a synthetic bootstrap violation for monitor
    self-tests."""
    bad = copy.deepcopy(track)
    s = bad.states[index].s
    blow = factor * s ** K
    bad.eps_H1[index] *= blow
    bad.eps_weighted[index] *= blow
    bad.boot = None
    return bad


# -- experiment specification -------------------------------------------


@dataclass
class ExperimentSpec:
    """One named suite and its parameters."""

    kind: str
    dims: list = dc_field(default_factory=lambda: [1])
    ps: list = dc_field(default_factory=lambda: [2.0])
    E0: float = 0.0
    lambda0: float = 0.1
    t1: float | None = None
    K: int = 2
    rmax: float | None = None
    n: int | None = None
    outdir: str | None = None
    tau: float = 5e-4
    nodes_per_scale: int = 384
    lambda_stop: float = 9.5e-4
    seed: int | None = None
    tolerances: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ExperimentError(
                f"unknown kind {self.kind!r}; expected one of {KINDS}")
        self.dims = [int(d) for d in self.dims]
        self.ps = [float(p) for p in self.ps]

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ExperimentError(f"unknown spec fields: {sorted(unknown)}")
        if "kind" not in data:
            raise ExperimentError("spec needs a 'kind'")
        return cls(**data)

    def tol(self, name, default):
        return float(self.tolerances.get(name, default))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, float) and (math.isnan(obj) or math.isinf(obj)):
        return str(obj)
    return obj


_MU_CACHE = {}


def _mu_of(dim):
    if dim not in _MU_CACHE:
        _MU_CACHE[dim] = float(coercivity_mu(dim))
    return _MU_CACHE[dim]


def _constants_block(dim, p, E0, lambda0, K):
    diag = DiagnosticsConfig(K=K)
    gs = ground_state(dim, with_mu=False)
    exp = build_expansion(gs, p, K=K)
    c = law_mod.make_constants(exp, E0=E0, lambda0=lambda0)
    block = {"dim": dim, "p": p, "E0": E0, "lambda0": lambda0,
             "alpha": c.alpha, "beta": c.beta, "C_time": c.c_time,
             "C_lambda": c.c_lambda, "C_b": c.c_b, "mu": _mu_of(dim),
             "m": diag.m, "K": diag.K, "M": diag.M}
    return block, gs, exp, c


def _write_plot(path, x, y, header):
    with open(path, "w") as f:
        f.write(f"# {header}\n")
        for xi, yi in zip(x, y):
            f.write(f"{xi:.16e} {yi:.16e}\n")


# -- the suites ----------------------------------------------------------


def _exp_statics(spec, outdir):
    results, assertions = {}, []
    for dim in spec.dims:
        gs = ground_state(dim, with_mu=False)
        g, qv = gs.grid, gs.Q.values
        q = gs.q
        resid = g.laplacian(qv) - qv + qv ** (q + 1.0)
        ode = math.sqrt(g.norm_sq(resid) / g.norm_sq(qv))
        idres = gs.identity_residuals()
        e_crit = 0.5 * gs.norms["grad_sq"] - gs.norms["crit"] / (q + 2.0)
        poho = abs(e_crit) / (0.5 * gs.norms["grad_sq"])
        block = {"ode_residual": ode, "identities": idres,
                 "critical_energy_rel": poho, "norms": gs.norms}
        if dim == 1:
            closed = 3.0 ** 0.25 / np.sqrt(np.cosh(2.0 * g.r))
            block["closed_form_max_err"] = float(
                np.max(np.abs(qv - closed)))
        results[f"dim{dim}"] = block
        save_columns(os.path.join(outdir, f"groundstate_dim{dim}.csv"),
                     r=g.r, Q=qv, rho=gs.rho.values)
        assertions += [
            (f"dim{dim} ode residual", ode <= spec.tol("ode", 1e-10),
             f"{ode:.3e} <= 1e-10"),
            (f"dim{dim} linearized identities",
             max(idres.values()) <= spec.tol("identities", 1e-6),
             f"max {max(idres.values()):.3e} <= 1e-6"),
            (f"dim{dim} critical energy",
             poho <= spec.tol("energy_zero", 1e-8),
             f"{poho:.3e} <= 1e-8"),
        ]
        if dim == 1:
            assertions.append(
                ("dim1 closed form",
                 block["closed_form_max_err"] <= spec.tol("closed", 1e-8),
                 f"{block['closed_form_max_err']:.3e} <= 1e-8"))
    results["constants"] = {}
    for dim in spec.dims:
        # provenance block; fall back to the mid-subcritical power when
        # the spec's p leaves no room below the critical exponent
        p_use = next((p for p in spec.ps
                      if 2.0 - dim * (p - 1.0) / 2.0 >= 0.05),
                     1.0 + 2.0 / dim)
        block, *_ = _constants_block(dim, p_use, spec.E0, spec.lambda0,
                                     spec.K)
        results["constants"][f"dim{dim}"] = block
    return results, assertions


def _exp_profile(spec, outdir):
    results, assertions = {}, []
    for dim in spec.dims:
        for p in spec.ps:
            block, gs, exp, c = _constants_block(
                dim, p, spec.E0, spec.lambda0, spec.K)
            lams = np.geomspace(0.01, 0.1, 13)
            xs, ws = [], []
            for lam in lams:
                b = lam ** (0.5 * c.alpha)
                xs.append(b * b + lam ** c.alpha)
                ws.append(exp.weighted_residual_h1(b, lam))
            xs, ws = np.log(xs), np.log(ws)
            A = np.vstack([xs, np.ones_like(xs)]).T
            (slope, _), *_ = np.linalg.lstsq(A, ws, rcond=None)
            need = 0.9 * (spec.K + 2)
            key = f"dim{dim}_p{p}"
            results[key] = {"constants": block,
                            "residual_slope": float(slope),
                            "certificate": exp.certificate}
            _write_plot(os.path.join(outdir, f"residual_{key}.dat"),
                        xs, ws, "log(b^2+lam^alpha)  log ||weighted resid||")
            assertions.append(
                (f"{key} residual slope", slope >= need,
                 f"{slope:.3f} >= {need:.3f}"))
    return results, assertions


def _exp_law(spec, outdir):
    results, assertions = {}, []
    for dim in spec.dims:
        for p in spec.ps:
            block, gs, exp, c = _constants_block(
                dim, p, spec.E0, spec.lambda0, spec.K)
            key = f"dim{dim}_p{p}"
            res = {"constants": block}

            lams = np.geomspace(1e-3, 1e-1, 17)
            ratio = []
            for lam in lams:
                d, bnd = exp.energy_identity_defect(
                    lam ** (0.5 * c.alpha), lam)
                ratio.append(d / bnd)
            ratio = np.asarray(ratio)
            band_e = float(ratio.max() / ratio.min())
            res["energy_identity_band"] = band_e
            _write_plot(os.path.join(outdir, f"energy_band_{key}.dat"),
                        lams, ratio, "lambda  defect/bound")
            assertions.append((f"{key} energy identity band",
                               band_e <= spec.tol("band", 3.0),
                               f"max/min {band_e:.3f} <= 3"))

            c0 = law_mod.make_constants(exp, E0=0.0, lambda0=spec.lambda0)
            lam_chk = np.geomspace(1e-6, 1e-2, 9)
            cf = max(abs(law_mod.F_of_lambda(l, c0)
                         - law_mod.F_closed_form_zero_energy(l, c0))
                     / law_mod.F_of_lambda(l, c0) for l in lam_chk)
            res["closed_form_rel_err"] = float(cf)
            assertions.append((f"{key} zero-energy closed form",
                               cf <= spec.tol("closed_form", 1e-10),
                               f"{cf:.3e} <= 1e-10"))

            if c.C0 != 0.0:
                rat = []
                for lam in lam_chk:
                    d, bnd = law_mod.F_asymptote_defect(lam, c)
                    rat.append(d / bnd)
                rat = np.asarray(rat)
                band_f = float(rat.max() / rat.min())
                res["asymptote_band"] = band_f
                _write_plot(os.path.join(outdir, f"asymptote_{key}.dat"),
                            lam_chk, rat, "lambda  defect/bound")
                assertions.append((f"{key} asymptote band",
                                   band_f <= spec.tol("band", 3.0),
                                   f"max/min {band_f:.3f} <= 3"))

            s1s = np.array([100.0, 400.0, 1600.0])
            closes = []
            for s1 in s1s:
                lam1, b1 = law_mod.initial_params(exp, c, s1)
                closes.append(law_mod.initial_closeness(lam1, b1, s1, c))
            closes = np.asarray(closes)
            A = np.vstack([np.log(s1s), np.ones(3)]).T
            (slope, _), *_ = np.linalg.lstsq(A, np.log(closes), rcond=None)
            target = -min(0.5, 4.0 / c.alpha - 2.0)
            res["closeness"] = {"s1": s1s.tolist(),
                                "value": closes.tolist(),
                                "fit_exponent": float(slope),
                                "target_exponent": target}
            _write_plot(os.path.join(outdir, f"closeness_{key}.dat"),
                        s1s, closes, "s1  closeness")
            mono = bool(np.all(np.diff(closes) < 0.0))
            if c.C0 != 0.0:
                # the stated bound is saturated only when both of its
                # terms are live, which needs a nonzero energy
                ok = mono and abs(slope - target) <= 0.25 * abs(target)
                assertions.append(
                    (f"{key} closeness decay", bool(ok),
                     f"exponent {slope:.4f} vs {target:.4f} (25%)"))
            else:
                assertions.append(
                    (f"{key} closeness decreasing", mono,
                     f"{closes.tolist()}"))
            results[key] = res
    return results, assertions


def _headline_t1(c, lam_start=0.0999):
    s_t = law_mod.F_of_lambda(lam_start, c)
    return -c.c_time * s_t ** (-(4.0 - c.alpha) / c.alpha)


_ASYM_CACHE = {}


def asymptotic_entry_scale(exp, c, frac=0.05, lo=1e-5, hi=0.3):
    """Largest scale where the subleading profile-energy terms stay
    below frac of the leading invariant b^2 ~ kap lam^alpha + C0 lam^2.

    Above it the tracked parameters still carry O(1) corrections and a
    power-law fit reads them as exponent/prefactor bias, so rate fits
    clip their windows here.  Depends on (dim, p, E0) only.
    """
    key = (c.dim, c.p, c.E0, frac)
    if key not in _ASYM_CACHE:
        lams = np.geomspace(hi, lo, 49)
        defect = np.full(lams.size, np.inf)
        for i, lam in enumerate(lams):
            try:
                defect[i] = law_mod.invariant_defect(exp, c, lam)
            except ValueError:
                continue    # scale outside the profile trust region
        ok = np.nonzero(defect <= frac)[0]
        if ok.size == 0:
            raise ExperimentError(
                f"no scale in [{lo:g}, {hi:g}] reaches the asymptotic "
                f"regime at frac={frac}")
        i = ok[0]
        if i == 0:
            val = lams[0]
        else:
            val = math.exp(scipy.optimize.brentq(
                lambda x: law_mod.invariant_defect(exp, c, math.exp(x))
                - frac,
                math.log(lams[i]), math.log(lams[i - 1]), xtol=1e-10))
        _ASYM_CACHE[key] = float(val)
    return _ASYM_CACHE[key]


def _fit_tracked_rates(track, c, exp=None, frac=0.05, lam_top=1e-1):
    a = track.param_arrays()
    t, lam, b = a["t"], a["lam"], a["b"]
    if exp is not None:
        lam_top = min(lam_top, asymptotic_entry_scale(exp, c, frac=frac))
    keep = lam <= lam_top
    if keep.sum() >= 20 and lam[keep].max() / lam[keep].min() >= 10.0:
        t, lam, b = t[keep], lam[keep], b[keep]
    t_lam = fit_blowup_time(np.c_[t, lam])
    fit_l = rate_fit(np.c_[t, lam], t_star=t_lam)
    t_b = fit_blowup_time(np.c_[t, b])
    fit_b = rate_fit(np.c_[t, b], t_star=t_b)
    e_lam, e_b = rate_exponents(c.dim, c.p)
    return {
        "t_star_lambda": t_lam, "t_star_b": t_b,
        "lambda_fit": fit_l.as_dict(), "b_fit": fit_b.as_dict(),
        "lambda_exponent_target": e_lam, "b_exponent_target": e_b,
        "lambda_exponent_rel_err": abs(fit_l.exponent / e_lam - 1.0),
        "b_exponent_rel_err": abs(fit_b.exponent / e_b - 1.0),
        "lambda_prefactor_rel_err": abs(fit_l.constant / c.c_lambda - 1.0),
        "b_prefactor_rel_err": abs(fit_b.constant / c.c_b - 1.0),
    }, fit_l, fit_b


def _exp_ratefit(spec, outdir):
    results, assertions = {}, []
    for dim in spec.dims:
        for p in spec.ps:
            block, gs, exp, c = _constants_block(
                dim, p, spec.E0, spec.lambda0, spec.K)
            t1 = spec.t1 if spec.t1 is not None else _headline_t1(c)
            cfg = RunConfig(dim=dim, p=p, E0=spec.E0, t1=t1, t_end=0.0,
                            lambda_stop=spec.lambda_stop, tau=spec.tau,
                            nodes_per_scale=spec.nodes_per_scale)
            traj = run(cfg, exp=exp, constants=c)
            track = track_trajectory(traj, exp)
            key = f"dim{dim}_p{p}"
            sub = os.path.join(outdir, key)
            os.makedirs(sub, exist_ok=True)
            traj.save_ledger(os.path.join(sub, "conservation.csv"))
            track.to_csv(os.path.join(sub, "track.csv"))
            fits, fit_l, fit_b = _fit_tracked_rates(track, c, exp=exp)
            md, ed = traj.relative_drifts()
            res = {"constants": block, "t1": t1, "status": traj.status,
                   "steps": traj.steps, "mass_drift": md,
                   "energy_drift": ed, **fits}
            a = track.param_arrays()
            _write_plot(os.path.join(sub, "rate_lambda.dat"),
                        np.log(np.abs(fits["t_star_lambda"] - a["t"])),
                        np.log(a["lam"]), "log|t*-t|  log lambda")
            _write_plot(os.path.join(sub, "rate_b.dat"),
                        np.log(np.abs(fits["t_star_b"] - a["t"])),
                        np.log(a["b"]), "log|t*-t|  log b")
            elapsed = max(1.0, abs(a["t"][-1] - t1))
            assertions += [
                (f"{key} finished", traj.status == "reached-lambda-stop",
                 traj.status),
                (f"{key} mass conserved",
                 md <= spec.tol("mass", 1e-8) * elapsed, f"{md:.2e}"),
                (f"{key} energy conserved",
                 ed <= spec.tol("energy", 1e-6) * elapsed, f"{ed:.2e}"),
                (f"{key} lambda exponent",
                 fits["lambda_exponent_rel_err"] <= spec.tol("exp_l", 0.05),
                 f"{fit_l.exponent:.4f} vs {fits['lambda_exponent_target']:.4f}"),
                (f"{key} b exponent",
                 fits["b_exponent_rel_err"] <= spec.tol("exp_b", 0.10),
                 f"{fit_b.exponent:.4f} vs {fits['b_exponent_target']:.4f}"),
                (f"{key} fit quality",
                 min(fit_l.r2, fit_b.r2) >= 0.99,
                 f"r2 {fit_l.r2:.5f}/{fit_b.r2:.5f}"),
            ]
            if (dim, p) == (1, 2.0):
                assertions += [
                    (f"{key} lambda prefactor",
                     fits["lambda_prefactor_rel_err"]
                     <= spec.tol("pref", 0.10),
                     f"{fit_l.constant:.4f} vs {c.c_lambda:.4f}"),
                    (f"{key} b prefactor",
                     fits["b_prefactor_rel_err"] <= spec.tol("pref", 0.10),
                     f"{fit_b.constant:.4f} vs {c.c_b:.4f}"),
                ]
            results[key] = res
    return results, assertions


def _sweep_worker(args):
    dim, p, E0, lambda0, K, tau, nodes, outsub = args
    gs = ground_state(dim, with_mu=False)
    exp = build_expansion(gs, p, K=K)
    c = law_mod.make_constants(exp, E0=E0, lambda0=lambda0)
    traj = t1 = None
    for lam_start in (0.0999, 0.06, 0.04):
        t1 = _headline_t1(c, lam_start=lam_start)
        cfg = RunConfig(dim=dim, p=p, E0=E0, t1=t1, t_end=0.0,
                        lambda_stop=lam_start / 10.0, tau=tau,
                        nodes_per_scale=nodes)
        try:
            traj = run(cfg, exp=exp, constants=c)
            break
        except ValueError:
            continue    # starting scale outside the profile trust region
    if traj is None:
        raise ExperimentError(f"no admissible start for dim={dim} p={p}")
    track = track_trajectory(traj, exp, stride=2)
    os.makedirs(outsub, exist_ok=True)
    traj.save_ledger(os.path.join(outsub, "conservation.csv"))
    track.to_csv(os.path.join(outsub, "track.csv"))
    a = track.param_arrays()
    ts = fit_blowup_time(np.c_[a["t"], a["lam"]])
    fit = rate_fit(np.c_[a["t"], a["lam"]], t_star=ts)
    e_lam, _ = rate_exponents(dim, p)
    md, ed = traj.relative_drifts()
    return {"dim": dim, "p": p, "alpha": c.alpha, "beta": c.beta,
            "t1": t1, "status": traj.status,
            "exponent": fit.exponent, "target": e_lam, "r2": fit.r2,
            "constant": fit.constant, "C_lambda": c.c_lambda,
            "mass_drift": md, "energy_drift": ed}


def _exp_sweep(spec, outdir):
    jobs = [(dim, p, spec.E0, spec.lambda0, spec.K, spec.tau,
             spec.nodes_per_scale,
             os.path.join(outdir, f"run_dim{dim}_p{p}"))
            for dim in spec.dims for p in spec.ps]
    workers = min(len(jobs), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_worker, jobs))
    else:
        rows = [_sweep_worker(j) for j in jobs]
    results, assertions = {"table": rows}, []
    for row in rows:
        key = f"dim{row['dim']}_p{row['p']}"
        rel = abs(row["exponent"] / row["target"] - 1.0)
        assertions.append(
            (f"{key} exponent", rel <= spec.tol("exp_l", 0.05),
             f"{row['exponent']:.4f} vs {row['target']:.4f}"))
    for dim in spec.dims:
        sub = sorted((r for r in rows if r["dim"] == dim),
                     key=lambda r: r["p"])
        if len(sub) > 1:
            mono = all(a["exponent"] > b["exponent"]
                       for a, b in zip(sub, sub[1:]))
            assertions.append(
                (f"dim{dim} exponents monotone in p", mono,
                 " > ".join(f"{r['exponent']:.4f}" for r in sub)))
    with open(os.path.join(outdir, "sweep_table.dat"), "w") as f:
        f.write("# dim p exponent target r2\n")
        for r in rows:
            f.write(f"{r['dim']} {r['p']} {r['exponent']:.6f} "
                    f"{r['target']:.6f} {r['r2']:.6f}\n")
    mu_blocks = {f"dim{d}": _mu_of(d) for d in spec.dims}
    diag = DiagnosticsConfig(K=spec.K)
    results["constants"] = {"mu": mu_blocks, "m": diag.m, "K": diag.K,
                            "M": diag.M}
    return results, assertions


_DISPATCH = {
    "verify-statics": _exp_statics,
    "verify-profile": _exp_profile,
    "verify-law": _exp_law,
    "rate-fit": _exp_ratefit,
    "sweep": _exp_sweep,
}


def output_root(spec):
    return (spec.outdir or os.environ.get("MMBLOW_OUT")
            or os.path.join(os.getcwd(), "mmblow-out"))


def run_experiment(spec):
    """Execute one suite; write its report files; return the report.

    The report dict carries every computed result, the constants used,
    and an 'assertions' list of (name, ok, detail); 'pass' is True iff
    all assertions hold.  On an execution error the partial outputs are
    kept next to a FAILED marker file and the error propagates.
    """
    outdir = os.path.join(output_root(spec), spec.kind)
    os.makedirs(outdir, exist_ok=True)
    try:
        results, assertions = _DISPATCH[spec.kind](spec, outdir)
    except Exception as err:
        with open(os.path.join(outdir, "FAILED"), "w") as f:
            f.write(f"{type(err).__name__}: {err}\n")
        raise ExperimentError(f"{spec.kind} failed: {err}") from err
    ok = all(bool(a[1]) for a in assertions)
    report = {
        "kind": spec.kind,
        "spec": dataclasses.asdict(spec),
        "results": results,
        "assertions": [{"name": n, "ok": bool(o), "detail": d}
                       for n, o, d in assertions],
        "pass": ok,
    }
    with open(os.path.join(outdir, "summary.json"), "w") as f:
        json.dump(_jsonable(report), f, indent=2)
    marker = os.path.join(outdir, "FAILED")
    if not ok:
        bad = [a[0] for a in assertions if not a[1]]
        with open(marker, "w") as f:
            f.write("failed assertions:\n" + "\n".join(bad) + "\n")
    elif os.path.exists(marker):
        os.remove(marker)
    return report
