"""Mesh, splitting-step, and run-loop checks for the time integrator."""

import math

import numpy as np
import pytest

from mmblow import law
from mmblow.evolve import (FluxMesh, RunConfig, build_mesh, make_initial,
                           run, step)


@pytest.fixture(scope="module")
def start(expansion_of):
    exp = expansion_of(1)
    c = law.make_constants(exp, E0=0.0, lambda0=0.3)
    s1 = law.F_of_lambda(0.105, c)
    t1 = -c.c_time * s1 ** (-(4.0 - c.alpha) / c.alpha)
    cfg = RunConfig(dim=1, p=2.0, E0=0.0, t1=t1, t_end=0.0,
                    lambda_stop=1e-2, tau=5e-4, nodes_per_scale=384)
    return exp, c, t1, cfg


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(t1=0.1)                      # start must precede blow-up
    with pytest.raises(ValueError):
        RunConfig(t1=-0.1, t_end=-0.1)         # empty time interval
    with pytest.raises(ValueError):
        RunConfig(t1=-0.1, tau=0.0)
    with pytest.raises(ValueError):
        RunConfig(t1=-0.1, t_end=0.0)          # singular time unreachable
    cfg = RunConfig(t1=-0.1, t_end=0.0, lambda_stop=1e-3)
    assert cfg.direction == 1.0
    assert RunConfig(t1=-0.1, t_end=-0.2).direction == -1.0


def test_build_mesh_grading():
    mesh = build_mesh(1, 12.0, 1e-3, nodes_per_scale=384)
    gaps = mesh.d
    assert gaps.min() >= 1e-3 / 384 * (1.0 - 1e-12)
    assert gaps.max() <= 1.0 / 32.0 + 1e-12
    # near the origin the spacing sits at the floor
    assert gaps[0] == pytest.approx(1e-3 / 384)
    with pytest.raises(ValueError):
        build_mesh(1, 12.0, 0.0)


def test_mesh_quadrature_matches_static(gs_of):
    gs = gs_of(1)
    mesh = build_mesh(1, 12.0, 0.05, nodes_per_scale=384)
    u = 3.0 ** 0.25 / np.sqrt(np.cosh(2.0 * mesh.r))
    assert mesh.mass(u) == pytest.approx(gs.norms["mass"], rel=1e-4)


def test_flux_laplacian_self_adjoint():
    mesh = build_mesh(2, 8.0, 0.01, nodes_per_scale=64)
    rng = np.random.default_rng(3)
    u = rng.normal(size=mesh.n) + 1j * rng.normal(size=mesh.n)
    v = rng.normal(size=mesh.n) + 1j * rng.normal(size=mesh.n)
    left = np.sum(mesh.w * np.conj(u) * mesh.laplacian(v))
    right = np.sum(mesh.w * np.conj(mesh.laplacian(u)) * v)
    assert abs(left - right) <= 1e-10 * max(abs(left), 1.0)


def test_dirichlet_form_matches_laplacian():
    mesh = build_mesh(1, 8.0, 0.01, nodes_per_scale=64)
    u = np.exp(-mesh.r ** 2) * (1.0 + 0.5j)
    byparts = -np.real(np.sum(mesh.w * np.conj(u) * mesh.laplacian(u)))
    # matvec path loses ~5 digits to second-difference cancellation
    assert mesh.dirichlet(u) == pytest.approx(byparts, rel=1e-9)


def radial_momentum(mesh, u):
    du = np.gradient(u, mesh.r)
    return np.imag(np.sum(mesh.w * np.conj(u) * mesh.r * du))


def test_initial_data_facts(start):
    exp, c, t1, cfg = start
    st = make_initial(exp, c, t1, cfg)
    assert st.mesh.mass(st.values) == pytest.approx(exp.gs.norms["mass"],
                                                    rel=1e-14)
    assert st.lambda_proxy() == pytest.approx(0.105, rel=0.05)
    st_neg = make_initial(exp, c, t1, cfg, negate_b=True)
    mom = radial_momentum(st.mesh, st.values)
    mom_neg = radial_momentum(st_neg.mesh, st_neg.values)
    assert mom < 0.0  # inward mass flux of the shrinking profile
    assert mom_neg == pytest.approx(-mom, rel=1e-10)
    raw = make_initial(exp, c, t1, cfg, exact_mass=False)
    assert raw.mesh.mass(raw.values) > exp.gs.norms["mass"]


def test_mesh_must_resolve_quadratic_phase(start):
    exp, c, t1, _ = start
    cfg = RunConfig(dim=1, p=2.0, E0=0.0, t1=t1, t_end=0.0,
                    lambda_stop=1e-2, nodes_per_scale=8)
    with pytest.raises(ValueError):
        make_initial(exp, c, t1, cfg)


def test_step_conserves_mass_and_reverses(start):
    exp, c, t1, cfg = start
    st = make_initial(exp, c, t1, cfg)
    u0 = st.values.copy()
    m0 = st.mesh.mass(u0)
    dt = st.dt
    for _ in range(5):
        step(st, dt)
    assert st.mesh.mass(st.values) == pytest.approx(m0, rel=1e-13)
    for _ in range(5):
        step(st, -dt)
    err = np.max(np.abs(st.values - u0)) / np.max(np.abs(u0))
    assert err < 1e-11
    assert abs(st.t - t1) < 1e-15


def test_short_run_bookkeeping(start):
    exp, c, t1, _ = start
    cfg = RunConfig(dim=1, p=2.0, E0=0.0, t1=t1, t_end=0.0,
                    lambda_stop=1e-2, tau=5e-4, nodes_per_scale=384,
                    max_steps=300, ledger_every=10)
    traj = run(cfg, exp=exp, constants=c)
    assert traj.status == "max-steps"
    assert traj.steps == 300
    a = traj.arrays()
    assert len(a["t"]) == len(a["mass"]) == len(a["energy"])
    # final entry may duplicate the last periodic one
    assert np.all(np.diff(a["t"]) >= 0.0)
    assert np.all(np.diff(a["t"][:-1]) > 0.0)
    assert np.all(np.diff(a["s"]) >= 0.0)
    md, ed = traj.relative_drifts()
    assert md < 1e-10 and ed < 1e-6


def test_backward_run_reaches_s_stop(start):
    exp, c, t1, _ = start
    cfg = RunConfig(dim=1, p=2.0, E0=0.0, t1=t1, t_end=-1.0,
                    s_stop=law.s1_of_t1(t1, c) - 0.05, tau=5e-4,
                    nodes_per_scale=384)
    traj = run(cfg, exp=exp, constants=c)
    assert traj.status == "reached-s-stop"
    a = traj.arrays()
    assert np.all(np.diff(a["t"]) < 0.0)
    # de-concentration: the scale proxy grows away from the singularity
    assert a["lam_proxy"][-1] > a["lam_proxy"][0]


def test_snapshot_cadence(start):
    exp, c, t1, _ = start
    cfg = RunConfig(dim=1, p=2.0, E0=0.0, t1=t1, t_end=0.0,
                    lambda_stop=1e-2, tau=5e-4, nodes_per_scale=384,
                    max_steps=3000, snap_ds=0.05)
    traj = run(cfg, exp=exp, constants=c)
    # a final snapshot is taken at termination regardless of cadence
    ds = np.diff([snap["s"] for snap in traj.snapshots])[:-1]
    assert np.all(ds > 0.045)
    assert np.all(ds < 0.06)


def test_ledger_roundtrip(tmp_path, start):
    from mmblow.radial import load_columns
    exp, c, t1, _ = start
    cfg = RunConfig(dim=1, p=2.0, E0=0.0, t1=t1, t_end=0.0,
                    lambda_stop=1e-2, tau=5e-4, nodes_per_scale=384,
                    max_steps=120)
    traj = run(cfg, exp=exp, constants=c)
    path = tmp_path / "ledger.csv"
    traj.save_ledger(path)
    cols = load_columns(path)
    assert np.allclose(cols["mass"], traj.arrays()["mass"], rtol=1e-12)
