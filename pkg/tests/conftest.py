"""Shared fixtures.

Everything heavy is session-scoped and lazy: ground states and profile
expansions are memoized per dimension, and the tracked evolution runs
(the headline collapses, the mesh-doubled backward pair, the control
smokes) are built once on first use.  Running a single module file
only pays for what its tests touch.
"""

import numpy as np
import pytest

from mmblow.groundstate import ground_state
from mmblow.blowup_profile import build_expansion
from mmblow import law
from mmblow.evolve import RunConfig, make_initial, run
from mmblow.modulation import track_trajectory, richardson_track

_GS, _EXP = {}, {}


def gs_cached(dim):
    if dim not in _GS:
        _GS[dim] = ground_state(dim, with_mu=False)
    return _GS[dim]


def expansion_cached(dim, p=2.0, K=2):
    key = (dim, p, K)
    if key not in _EXP:
        _EXP[key] = build_expansion(gs_cached(dim), p, K=K)
    return _EXP[key]


def headline_start(c, lam1):
    """(s1, t1) for a forward run entering the trap at scale lam1."""
    s1 = law.F_of_lambda(lam1, c)
    return s1, -c.c_time * s1 ** (-(4.0 - c.alpha) / c.alpha)


@pytest.fixture(scope="session")
def gs_of():
    return gs_cached


@pytest.fixture(scope="session")
def expansion_of():
    return expansion_cached


@pytest.fixture(scope="session")
def headline1():
    """Forward collapse, dim 1: scale tracked from 1.05e-1 to 2.4e-4."""
    exp = expansion_cached(1)
    c = law.make_constants(exp, E0=0.0, lambda0=0.3)
    _, t1 = headline_start(c, 0.105)
    cfg = RunConfig(dim=1, p=2.0, E0=0.0, t1=t1, t_end=0.0,
                    lambda_stop=2.4e-4, tau=5e-4, nodes_per_scale=384)
    traj = run(cfg, exp=exp, constants=c)
    track = track_trajectory(traj, exp, stride=2)
    return {"exp": exp, "c": c, "t1": t1, "traj": traj, "track": track}


@pytest.fixture(scope="session")
def headline2():
    """Forward collapse, dim 2, same protocol."""
    exp = expansion_cached(2)
    c = law.make_constants(exp, E0=0.0, lambda0=0.2)
    _, t1 = headline_start(c, 0.105)
    cfg = RunConfig(dim=2, p=2.0, E0=0.0, t1=t1, t_end=0.0,
                    lambda_stop=2.4e-4, tau=5e-4, nodes_per_scale=384)
    traj = run(cfg, exp=exp, constants=c)
    track = track_trajectory(traj, exp)
    return {"exp": exp, "c": c, "t1": t1, "traj": traj, "track": track}


@pytest.fixture(scope="session")
def backward_pair():
    """Backward (de-concentrating) run on two meshes plus the
    mesh-pair extrapolated track; the residual-decay and monitor
    criteria read from these."""
    exp = expansion_cached(1)
    c = law.make_constants(exp, E0=0.0, lambda0=0.1)
    t1 = -c.c_time * 40.0 ** (-(4.0 - c.alpha) / c.alpha)
    out = {"exp": exp, "c": c, "t1": t1}
    for nodes in (384, 768):
        cfg = RunConfig(dim=1, p=2.0, E0=0.0, t1=t1, t_end=-0.2,
                        s_stop=3.0, tau=1.5e-4, nodes_per_scale=nodes)
        traj = run(cfg, exp=exp, constants=c)
        out[f"traj{nodes}"] = traj
        out[nodes] = track_trajectory(traj, exp)
    out["rich"] = richardson_track(out[384], out[768], exp)
    return out


@pytest.fixture(scope="session")
def signflip(headline1):
    """Control run with the phase-curvature sign reversed: the core
    must de-concentrate instead of collapsing."""
    exp, c, t1 = headline1["exp"], headline1["c"], headline1["t1"]
    cfg = RunConfig(dim=1, p=2.0, E0=0.0, t1=t1, t_end=t1 / 6.0,
                    tau=5e-4, nodes_per_scale=384)
    state = make_initial(exp, c, t1, cfg, negate_b=True)
    return run(cfg, exp=exp, constants=c, state=state)


@pytest.fixture(scope="session")
def defocusing_smoke():
    """Critical-mass data with the lower-order term defocusing: the
    gradient must stay bounded (no collapse)."""
    exp = expansion_cached(1)
    c = law.make_constants(exp, E0=0.0, lambda0=0.1)
    cfg = RunConfig(dim=1, p=2.0, t1=-0.03903, t_end=-0.001, sign=-1.0,
                    tau=5e-4, nodes_per_scale=384, max_steps=400000)
    state = make_initial(exp, c, -0.03903, cfg)
    return run(cfg, exp=exp, constants=c, state=state)


def require_status(traj, want="reached-lambda-stop"):
    assert traj.status == want, traj.status
    return traj


def drift_ok(traj, mass_budget=1e-8, energy_budget=1e-6):
    """The conservation acceptance rule: total relative drift within
    budget * max(1, elapsed physical time)."""
    md, ed = traj.relative_drifts()
    a = traj.arrays()
    elapsed = max(1.0, float(abs(a["t"][-1] - a["t"][0])))
    return md <= mass_budget * elapsed and ed <= energy_budget * elapsed, \
        (md, ed, elapsed)
