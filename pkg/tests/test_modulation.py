"""Decomposition, tracking, and bootstrap-monitor checks."""

import math

import numpy as np
import pytest

from mmblow import law
from mmblow.evolve import RunConfig, run
from mmblow.experiments import corrupt_track
from mmblow.modulation import (Decomposer, DiagnosticsConfig, ParamState,
                               _derivative_series, bootstrap_monitor,
                               recompose, track_trajectory)


@pytest.fixture(scope="module")
def exp1(expansion_of):
    return expansion_of(1)


@pytest.fixture(scope="module")
def short(exp1):
    c = law.make_constants(exp1, E0=0.0, lambda0=0.3)
    s1 = law.F_of_lambda(0.105, c)
    t1 = -c.c_time * s1 ** (-(4.0 - c.alpha) / c.alpha)
    cfg = RunConfig(dim=1, p=2.0, E0=0.0, t1=t1, t_end=0.0,
                    lambda_stop=1e-2, tau=5e-4, nodes_per_scale=384,
                    max_steps=3000, snap_ds=0.05)
    traj = run(cfg, exp=exp1, constants=c)
    track = track_trajectory(traj, exp1)
    return c, traj, track


def synthetic_field(exp, params, r, bump=0.0):
    u = recompose(exp, params, r=r)
    if bump:
        u = u + bump * (1.0 + 0.4j) * np.exp(-(r / 0.5) ** 2)
    return u


def test_decompose_pure_profile(exp1):
    r = np.linspace(0.0, 8.0, 4001)
    truth = ParamState(lam=0.2, b=0.15, gamma=0.3)
    u = synthetic_field(exp1, truth, r)
    dec = Decomposer(exp1)
    guess = ParamState(lam=0.23, b=0.10, gamma=0.25)
    params, eps, info = dec.decompose(r, u, guess)
    assert params.lam == pytest.approx(truth.lam, rel=1e-8)
    assert params.b == pytest.approx(truth.b, rel=1e-8)
    assert params.gamma == pytest.approx(truth.gamma, abs=1e-8)
    assert math.sqrt(exp1.grid.norm_sq(eps)) < 1e-6
    assert np.max(info["ortho_rel"]) < 1e-9


def test_decompose_enforces_orthogonality(exp1):
    r = np.linspace(0.0, 8.0, 4001)
    truth = ParamState(lam=0.2, b=0.15, gamma=0.3)
    u = synthetic_field(exp1, truth, r, bump=1e-3)
    dec = Decomposer(exp1)
    params, eps, info = dec.decompose(r, u, truth)
    assert np.max(info["ortho_rel"]) < 1e-9
    size = math.sqrt(exp1.grid.norm_sq(eps))
    assert 1e-5 < size < 1e-1
    # splitting is exact: parameters plus residual rebuild the field
    u2 = recompose(exp1, params, eps=eps, r=r)
    assert np.max(np.abs(u2 - u)) < 1e-6 * np.max(np.abs(u))


def test_recompose_requires_radii(exp1):
    with pytest.raises(ValueError):
        recompose(exp1, ParamState(lam=0.2, b=0.0, gamma=0.0))


def test_diagnostics_window():
    DiagnosticsConfig(M=0.25).validate(1.5)
    with pytest.raises(ValueError):
        DiagnosticsConfig(M=0.5).validate(1.5)   # cap is open
    with pytest.raises(ValueError):
        DiagnosticsConfig(M=0.0).validate(1.5)
    with pytest.raises(ValueError):
        DiagnosticsConfig(M=0.25).validate(1.9)  # cap 4/alpha-2 ~ 0.105


def test_derivative_series_power_law():
    x = np.geomspace(0.1, 10.0, 40)
    y = 3.0 * x ** 2.5
    dy = _derivative_series(x, y)
    assert np.allclose(dy, 7.5 * x ** 1.5, rtol=1e-9)
    # short series take the sliding-window path
    xs, ys = x[:6], y[:6]
    dys = _derivative_series(xs, ys)
    assert np.allclose(dys, 7.5 * xs ** 1.5, rtol=1e-7)
    # signed data falls back too and stays finite
    dz = _derivative_series(x, y - y.mean())
    assert np.all(np.isfinite(dz))


def test_track_short_run(short, exp1):
    _, traj, track = short
    n = len(track.states)
    assert n >= 20
    a = track.param_arrays()
    assert np.all(np.diff(a["s"]) > 0.0)
    assert max(np.max(o) for o in track.ortho_rel) < 1e-9
    assert np.max(track.eps_H1) < 0.05
    # decomposed scale agrees with the sup-norm proxy to a few percent
    lam_proxy = np.array([s["lam_proxy"] for s in traj.snapshots])
    assert np.allclose(a["lam"], lam_proxy[: n], rtol=0.05)
    assert track.mod.shape == (3, n)
    assert np.all(np.isfinite(track.mod))
    m = DiagnosticsConfig().m
    S = np.array(track.S)
    H = np.array(track.H)
    assert np.allclose(S, a["lam"] ** (-m) * H, rtol=1e-12)


def test_track_csv(tmp_path, short):
    _, _, track = short
    path = tmp_path / "track.csv"
    track.to_csv(path)
    header = path.read_text().splitlines()[0]
    for col in ("lambda", "b", "gamma", "eps_H1", "mod1"):
        assert col in header


def test_monitor_report_and_corruption(short):
    c, _, track = short
    report = bootstrap_monitor(track, c)
    n = len(track.states)
    for key in ("boot1_ok", "boot2_ok", "re_eps_ok", "re_close_ok"):
        assert report[key].shape == (n,)
        assert key in report["first_violation"]
    assert report["boot1_ok"].all()     # residual far inside the window
    assert track.boot is report
    # synthetic corruption must trip the re-estimation bound
    idx = n // 2
    assert report["re_eps_ok"][idx]
    bad = corrupt_track(track, idx, factor=1e6)
    assert bad.eps_H1[idx] > 1e3 * track.eps_H1[idx]  # original untouched
    report_bad = bootstrap_monitor(bad, c)
    assert not report_bad["re_eps_ok"][idx]
    assert report_bad["first_violation"]["re_eps_ok"] is not None
