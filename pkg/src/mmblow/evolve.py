"""Radial time integrator for the double-power Schrödinger flow.

i u_t + Lap u + |u|^(4/N) u + sign |u|^(p-1) u = 0 on radial R^N,
second-order Strang splitting: the nonlinear factor is an exact phase
rotation (it conserves |u| pointwise), the linear factor a Crank-
Nicolson step of the flux-form radial Laplacian.  The Laplacian is
assembled from face areas and cell volumes, which makes it Hermitian
in the cell-volume inner product; Crank-Nicolson is then a Cayley
transform and the discrete mass is conserved to solver roundoff on a
fixed mesh.

The mesh is graded: spacing h(r) grows ~ r/K between a floor (sized for
the smallest core scale the run is designed to reach) and an outer cap,
so every concentration scale lambda in the design range sees ~K nodes
across its core at cost O(K log(rmax/lambda)) total nodes.  If the core
shrinks below the design floor, the run regrids onto a mesh with a
four-times smaller floor (quintic interpolation) and continues.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.interpolate
import scipy.linalg

from .radial import omega_surface, save_columns
from .nonlin import q_exponent, F_crit, G_sub

__all__ = ["FluxMesh", "build_mesh", "RunConfig", "EvolutionState",
           "Trajectory", "make_initial", "step", "run", "evolve_field"]


class FluxMesh:
    """Graded radial mesh with face/volume geometry for flux-form
    operators.  Nodes r[0]=0 < r[1] < ... < r[n-1]; faces at midpoints."""

    def __init__(self, r, dim):
        r = np.asarray(r, dtype=float)
        if r[0] != 0.0 or np.any(np.diff(r) <= 0.0):
            raise ValueError("mesh must start at 0 and increase strictly")
        self.r = r
        self.dim = int(dim)
        self.n = r.size
        faces = 0.5 * (r[1:] + r[:-1])          # n-1 interior faces
        self.d = np.diff(r)                      # node gaps
        self.area = faces ** (dim - 1)
        vol_edges = np.concatenate([[0.0], faces ** dim, [r[-1] ** dim]])
        self.vol = np.diff(vol_edges) / dim      # per-node cell volumes
        self.w = omega_surface(dim) * self.vol   # integration weights
        # tridiagonal Laplacian: sub/diag/super
        c = self.area / self.d                   # face conductances
        lo = np.concatenate([c / self.vol[1:], [0.0]])
        hi = np.concatenate([[0.0], c / self.vol[:-1]])
        dg = np.zeros(self.n)
        dg[:-1] -= c / self.vol[:-1]
        dg[1:] -= c / self.vol[1:]
        self._lo, self._dg, self._hi = np.roll(lo, 1), dg, np.roll(hi, -1)
        # roll puts entries in LAPACK banded layout order
        self._lo[0] = 0.0
        self._hi[-1] = 0.0

    def laplacian(self, u):
        out = self._dg * u
        out[:-1] += self._hi[:-1] * u[1:]
        out[1:] += self._lo[1:] * u[:-1]
        return out

    def integrate(self, vals):
        return float(np.real(np.sum(self.w * vals)))

    def mass(self, u):
        return float(np.sum(self.w * np.abs(u) ** 2))

    def dirichlet(self, u):
        """'integral of |grad u|^2' as the flux quadratic form (exactly
        -Re <u, Lap u> in the cell-volume inner product)."""
        du = np.abs(np.diff(u)) ** 2
        return float(omega_surface(self.dim) * np.sum(self.area * du / self.d))

    def moment_sq(self, u):
        return float(np.sum(self.w * (self.r * np.abs(u)) ** 2))

    def energy(self, u, p, sign):
        q = q_exponent(self.dim)
        pot = self.integrate(F_crit(u, q)) + sign * self.integrate(G_sub(u, p))
        return 0.5 * self.dirichlet(u) - pot


def build_mesh(dim, rmax, scale_floor, nodes_per_scale=384, h_out=1.0 / 32.0):
    """Graded mesh resolving every core scale >= scale_floor with
    ~nodes_per_scale nodes: h(r) = clip(r/K, scale_floor/K, h_out)."""
    if scale_floor <= 0 or rmax <= 0:
        raise ValueError("scale_floor and rmax must be positive")
    K = int(nodes_per_scale)
    h_min = scale_floor / K
    pts = [0.0]
    while pts[-1] < rmax:
        h = min(max(h_min, pts[-1] / K), h_out)
        pts.append(pts[-1] + h)
    return FluxMesh(np.array(pts), dim)


@dataclass
class RunConfig:
    """Run parameters.  Data is placed at t1 < 0 (the singular time is
    0) and integrated toward t_end; t_end > t1 runs toward the
    singularity, t_end < t1 away from it.  The run also stops when the
    core-scale proxy reaches lambda_stop (toward) or when the rescaled
    clock drops to s_stop (away), if set.

    tau is the rescaled-time step: |dt| = tau * lambda_proxy^2, so the
    core always sees ~1/tau steps per rescaled unit.  rescale_trigger
    is the scale at which the mesh floor is designed; crossing it fires
    a regrid onto a 4x finer floor.
    """

    dim: int = 1
    p: float = 2.0
    E0: float = 0.0
    t1: float = -0.1
    t_end: float = 0.0
    sign: float = 1.0
    lambda_stop: float | None = None
    s_stop: float | None = None
    tau: float = 5e-4
    rmax: float = 12.0
    nodes_per_scale: int = 384
    h_out: float = 1.0 / 32.0
    rescale_trigger: float | None = None
    snap_ds: float = 0.25
    ledger_every: int = 25
    check_every: int = 100
    mass_budget: float = 1e-8
    energy_budget: float = 1e-6
    max_steps: int = 20_000_000
    max_halvings: int = 20

    def __post_init__(self):
        if not (self.t1 < 0.0 and self.t_end <= 0.0
                and self.t_end != self.t1):
            raise ValueError("need t1 < 0, t_end <= 0, t_end != t1")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.t_end == 0.0 and self.lambda_stop is None:
            # the singular time itself is unreachable: dt ~ tau lam^2
            # shrinks with the core, so a run aimed at t = 0 only ends
            # via the scale threshold
            raise ValueError("t_end = 0 requires lambda_stop")

    @property
    def direction(self):
        """+1 toward the singular time, -1 away from it."""
        return 1.0 if self.t_end > self.t1 else -1.0


@dataclass
class EvolutionState:
    mesh: FluxMesh
    values: np.ndarray
    t: float
    dt: float
    s: float
    p: float
    sign: float
    q_height: float
    mass0: float
    energy0: float
    mass_drift: float = 0.0
    energy_drift: float = 0.0
    kinetic_scale: float = 0.0

    def lambda_proxy(self):
        amp = float(np.max(np.abs(self.values)))
        if amp == 0.0:
            return math.inf
        return (self.q_height / amp) ** (2.0 / self.mesh.dim)


def _phase_rotate(state, dt_half):
    u = state.values
    a = np.abs(u)
    q = q_exponent(state.mesh.dim)
    rot = a ** q + state.sign * a ** (state.p - 1.0)
    state.values = u * np.exp(1j * dt_half * rot)


def _cn_linear(state, dt):
    mesh = state.mesh
    z = 0.5j * dt
    rhs = state.values + z * mesh.laplacian(state.values)
    ab = np.zeros((3, mesh.n), dtype=complex)
    ab[0, 1:] = -z * mesh._hi[:-1]   # column-indexed superdiagonal
    ab[1] = 1.0 - z * mesh._dg
    ab[2, :-1] = -z * mesh._lo[1:]   # column-indexed subdiagonal
    state.values = scipy.linalg.solve_banded((1, 1), ab, rhs,
                                             overwrite_ab=True,
                                             overwrite_b=True,
                                             check_finite=False)


def step(state, dt=None):
    """One symmetric split step (phase half, Crank-Nicolson, phase
    half); mutates and returns the state.  Negative dt runs the exact
    adjoint, so step(dt) followed by step(-dt) is the identity up to
    solver roundoff."""
    if dt is None:
        dt = state.dt
    lam0 = state.lambda_proxy()
    _phase_rotate(state, 0.5 * dt)
    _cn_linear(state, dt)
    _phase_rotate(state, 0.5 * dt)
    state.t += dt
    state.s += 0.5 * dt * (lam0 ** -2 + state.lambda_proxy() ** -2)
    return state


def _resample(mesh_old, values, mesh_new):
    """Quintic interpolation through the even extension (radial fields
    are smooth even functions of r)."""
    r = np.concatenate([-mesh_old.r[:0:-1], mesh_old.r])
    out = np.empty(mesh_new.n, dtype=complex)
    for part, view in ((np.real, out.real), (np.imag, out.imag)):
        v = part(values)
        ext = np.concatenate([v[:0:-1], v])
        spl = scipy.interpolate.InterpolatedUnivariateSpline(r, ext, k=5)
        view[:] = spl(mesh_new.r)
    return out


def make_initial(exp, constants, t1, config=None, *, negate_b=False,
                 s1_min=0.0, exact_mass=True):
    """Profile-shaped start data at physical time t1 < 0.

    Builds the run mesh, evaluates the rescaled profile at the
    calibrated (lambda1, b1) with zero phase, and freezes the mass and
    energy references.  Rejects meshes that cannot resolve the
    quadratic phase where the field is non-negligible.

    exact_mass rescales the amplitude so the data carries exactly the
    ground-state mass in the run's own quadrature.  The shape-only
    data is slightly heavier; that surplus never radiates, and once
    the core thins past it the collapse leaves the critical regime
    (the rate degenerates toward exponential with the width frozen
    near sqrt(8 dM / ||rQ||^2)).
    """
    from . import law as law_mod

    cfg = config if config is not None else RunConfig(
        dim=constants.dim, p=constants.p, E0=constants.E0, t1=t1)
    s1 = law_mod.s1_of_t1(t1, constants)
    lam1, b1 = law_mod.initial_params(exp, constants, s1, s1_min=s1_min)
    if negate_b:
        b1 = -b1
    trigger = cfg.rescale_trigger
    if trigger is None:
        if cfg.direction < 0:
            trigger = lam1 / 2.0    # the scale only grows away from 0
        elif cfg.lambda_stop:
            trigger = 0.45 * cfg.lambda_stop
        else:
            trigger = lam1 / 64.0
    mesh = build_mesh(cfg.dim, cfg.rmax, trigger, cfg.nodes_per_scale,
                      cfg.h_out)
    u0 = exp.rescale_to_physical(b1, lam1, 0.0, mesh.r)
    if exact_mass:
        u0 *= math.sqrt(exp.gs.norms["mass"] / mesh.mass(u0))
    # quadratic-phase resolution: phase advance per node gap must stay
    # small wherever the envelope is above noise
    amp = np.abs(u0)
    live = amp[:-1] > 1e-6 * amp.max()
    dphi = np.abs(b1) * mesh.r[:-1] * mesh.d / (2.0 * lam1 ** 2)
    worst = float(np.max(dphi[live])) if np.any(live) else 0.0
    if worst > 0.6:
        raise ValueError(
            f"mesh cannot resolve the quadratic phase (max advance "
            f"{worst:.3f} rad per gap); refine nodes_per_scale")
    state = EvolutionState(
        mesh=mesh, values=u0, t=float(t1), dt=cfg.tau * lam1 ** 2, s=s1,
        p=cfg.p, sign=cfg.sign, q_height=exp.gs.norms["height"],
        mass0=mesh.mass(u0), energy0=mesh.energy(u0, cfg.p, cfg.sign))
    state._trigger = trigger
    state._lam1, state._b1 = lam1, b1
    return state


@dataclass
class Trajectory:
    config: RunConfig
    status: str = "running"
    t: list = dc_field(default_factory=list)
    s: list = dc_field(default_factory=list)
    mass: list = dc_field(default_factory=list)
    energy: list = dc_field(default_factory=list)
    grad_norm: list = dc_field(default_factory=list)
    dt: list = dc_field(default_factory=list)
    xnorm: list = dc_field(default_factory=list)
    lam_proxy: list = dc_field(default_factory=list)
    snapshots: list = dc_field(default_factory=list)
    regrids: int = 0
    halvings: int = 0
    mass0: float = 0.0
    energy0: float = 0.0
    steps: int = 0

    def arrays(self):
        return {k: np.asarray(getattr(self, k))
                for k in ("t", "s", "mass", "energy", "grad_norm", "dt",
                          "xnorm", "lam_proxy")}

    def save_ledger(self, path):
        a = self.arrays()
        save_columns(path, t=a["t"], mass=a["mass"], energy=a["energy"],
                     grad_norm=a["grad_norm"], dt=a["dt"])

    def save_snapshots(self, outdir):
        import os
        os.makedirs(outdir, exist_ok=True)
        for i, snap in enumerate(self.snapshots):
            save_columns(os.path.join(outdir, f"snap_{i:05d}.csv"),
                         r=snap["r"], re=snap["values"].real,
                         im=snap["values"].imag)

    def relative_drifts(self):
        """(mass drift, energy drift) relative to the references; the
        energy scale is max(|E0|, peak kinetic term) since the raw
        energy is a near-cancellation of lambda^-2-sized terms."""
        a = self.arrays()
        md = np.max(np.abs(a["mass"] - self.mass0)) / self.mass0
        scale = max(abs(self.energy0), 0.5 * np.max(a["grad_norm"]), 1e-300)
        ed = np.max(np.abs(a["energy"] - self.energy0)) / scale
        return float(md), float(ed)


def _record(traj, state):
    mesh, u = state.mesh, state.values
    traj.t.append(state.t)
    traj.s.append(state.s)
    traj.mass.append(mesh.mass(u))
    traj.energy.append(mesh.energy(u, state.p, state.sign))
    traj.grad_norm.append(mesh.dirichlet(u))
    traj.dt.append(state.dt)
    traj.xnorm.append(math.sqrt(mesh.moment_sq(u)))
    traj.lam_proxy.append(state.lambda_proxy())


def _snapshot(traj, state):
    traj.snapshots.append({
        "t": state.t, "s": state.s, "r": state.mesh.r.copy(),
        "values": state.values.copy(),
        "lam_proxy": state.lambda_proxy(),
        "mesh_id": traj.regrids})


def run(config, exp=None, constants=None, state=None):
    """Integrate from the calibrated profile start until t_end,
    lambda_stop, or a controller stop; returns the Trajectory."""
    from . import law as law_mod
    if state is None:
        if exp is None:
            from .groundstate import ground_state
            from .blowup_profile import build_expansion
            gs = ground_state(config.dim, with_mu=False)
            exp = build_expansion(gs, config.p, K=2)
        if constants is None:
            constants = law_mod.make_constants(exp, E0=config.E0)
        state = make_initial(exp, constants, config.t1, config)
    traj = Trajectory(config=config, mass0=state.mass0,
                      energy0=state.energy0)
    tau = config.tau
    sgn = config.direction
    snap_next = state.s
    _record(traj, state)
    _snapshot(traj, state)
    snap_next += sgn * config.snap_ds
    while True:
        if sgn * (state.t - config.t_end) >= 0.0:
            traj.status = "reached-t-end"
            break
        lam = state.lambda_proxy()
        if (sgn > 0 and config.lambda_stop is not None
                and lam <= config.lambda_stop):
            traj.status = "reached-lambda-stop"
            break
        if (sgn < 0 and config.s_stop is not None
                and state.s <= config.s_stop):
            traj.status = "reached-s-stop"
            break
        if traj.steps >= config.max_steps:
            traj.status = "max-steps"
            break
        if lam <= getattr(state, "_trigger", 0.0):
            new_trigger = state._trigger / 4.0
            mesh = build_mesh(config.dim, config.rmax, new_trigger,
                              config.nodes_per_scale, config.h_out)
            state.values = _resample(state.mesh, state.values, mesh)
            state.mesh = mesh
            state._trigger = new_trigger
            traj.regrids += 1
        state.dt = sgn * min(tau * lam ** 2,
                             abs(config.t_end - state.t) + 1e-300)
        step(state)
        traj.steps += 1
        if traj.steps % config.ledger_every == 0:
            _record(traj, state)
        if sgn * (state.s - snap_next) >= 0.0:
            _snapshot(traj, state)
            snap_next += sgn * config.snap_ds
        if traj.steps % config.check_every == 0:
            elapsed = max(abs(state.t - config.t1), 1e-300)
            mesh, u = state.mesh, state.values
            kin = mesh.dirichlet(u)
            state.kinetic_scale = max(state.kinetic_scale, 0.5 * kin)
            esc = max(abs(state.energy0), state.kinetic_scale, 1e-300)
            e_rel = abs(mesh.energy(u, state.p, state.sign)
                        - state.energy0) / esc
            m_rel = abs(mesh.mass(u) - state.mass0) / state.mass0
            m_bad = m_rel > config.mass_budget * max(1.0, elapsed)
            e_bad = e_rel > config.energy_budget * max(1.0, elapsed)
            if m_bad or e_bad:
                traj.halvings += 1
                if traj.halvings > config.max_halvings:
                    traj.status = "resolution-limit"
                    break
                tau *= 0.5
    _record(traj, state)
    _snapshot(traj, state)
    traj.final_state = state
    return traj


def evolve_field(config, **kwargs):
    """Alias of run() for the package surface."""
    return run(config, **kwargs)
