"""Command-line front end.

mmblow <groundstate|profile|law|evolve|experiment> [flags]

Exit codes: 0 all checks passed, 1 a run or an embedded assertion
failed, 2 the invocation or configuration is invalid.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np


def _out_root(path):
    return (path or os.environ.get("MMBLOW_OUT")
            or os.path.join(os.getcwd(), "mmblow-out"))


def _write_json(path, data):
    from .experiments import _jsonable
    with open(path, "w") as f:
        json.dump(_jsonable(data), f, indent=2)


def _cmd_groundstate(args):
    from .groundstate import ground_state
    from .radial import save_columns
    gs = ground_state(args.dim, rmax=args.rmax, n=args.n,
                      with_mu=args.mu)
    outdir = os.path.join(_out_root(args.out), "groundstate")
    os.makedirs(outdir, exist_ok=True)
    save_columns(os.path.join(outdir, f"Q_dim{args.dim}.csv"),
                 r=gs.grid.r, Q=gs.Q.values, rho=gs.rho.values)
    report = {"dim": args.dim, "norms": gs.norms,
              "identities": gs.identity_residuals(),
              "mu": gs.mu if args.mu else None}
    _write_json(os.path.join(outdir, f"summary_dim{args.dim}.json"),
                report)
    print(f"Q(0)={gs.norms['height']:.9f} mass={gs.norms['mass']:.9f} "
          f"-> {outdir}")
    return 0


def _cmd_profile(args):
    from .groundstate import ground_state
    from .blowup_profile import build_expansion
    from .radial import save_columns
    gs = ground_state(args.dim, with_mu=False)
    exp = build_expansion(gs, args.p, K=args.K)
    outdir = os.path.join(_out_root(args.out), "profile")
    os.makedirs(outdir, exist_ok=True)
    key = f"dim{args.dim}_p{args.p}_K{args.K}"
    cols = {"r": gs.grid.r}
    for (j, k), pair in exp.pairs.items():
        cols[f"plus_{j}_{k}"] = pair.plus
        cols[f"minus_{j}_{k}"] = pair.minus
    save_columns(os.path.join(outdir, f"correctors_{key}.csv"), **cols)
    report = {"dim": args.dim, "p": args.p, "K": args.K,
              "alpha": exp.alpha, "beta": exp.beta,
              "theta_coefficients": {f"{j},{k}": pair.beta
                                     for (j, k), pair in exp.pairs.items()},
              "certificate": exp.certificate}
    _write_json(os.path.join(outdir, f"summary_{key}.json"), report)
    print(f"alpha={exp.alpha:.6f} beta={exp.beta:.9f} -> {outdir}")
    return 0


def _cmd_law(args):
    from . import law as law_mod
    from .groundstate import ground_state
    from .blowup_profile import build_expansion
    from .radial import save_columns
    gs = ground_state(args.dim, with_mu=False)
    exp = build_expansion(gs, args.p, K=args.K)
    c = law_mod.make_constants(exp, E0=args.E0, lambda0=args.lambda0)
    outdir = os.path.join(_out_root(args.out), "law")
    os.makedirs(outdir, exist_ok=True)
    key = f"dim{args.dim}_p{args.p}_E{args.E0}"
    s = np.geomspace(args.s_min, args.s_max, 61)
    save_columns(os.path.join(outdir, f"approx_laws_{key}.csv"),
                 s=s, lambda_app=law_mod.lambda_app(s, c),
                 b_app=law_mod.b_app(s, c),
                 t_of_s=-c.c_time * s ** (-(4 - c.alpha) / c.alpha))
    _write_json(os.path.join(outdir, f"constants_{key}.json"),
                dataclasses.asdict(c))
    print(f"alpha={c.alpha:.6f} beta={c.beta:.9f} "
          f"C_lambda={c.c_lambda:.6f} C_b={c.c_b:.6f} -> {outdir}")
    return 0


def _cmd_evolve(args):
    from .evolve import RunConfig, run
    with open(args.config) as f:
        data = json.load(f)
    try:
        cfg = RunConfig(**data)
    except (TypeError, ValueError) as err:
        print(f"error: invalid run config: {err}", file=sys.stderr)
        return 2
    traj = run(cfg)
    outdir = os.path.join(_out_root(args.out), "evolve")
    os.makedirs(outdir, exist_ok=True)
    traj.save_ledger(os.path.join(outdir, "conservation.csv"))
    if args.snapshots:
        traj.save_snapshots(os.path.join(outdir, "snapshots"))
    md, ed = traj.relative_drifts()
    report = {"status": traj.status, "steps": traj.steps,
              "regrids": traj.regrids, "halvings": traj.halvings,
              "mass_drift": md, "energy_drift": ed,
              "snapshots": len(traj.snapshots)}
    _write_json(os.path.join(outdir, "run.json"), report)
    print(f"{traj.status} after {traj.steps} steps "
          f"(mass drift {md:.2e}, energy drift {ed:.2e}) -> {outdir}")
    good = traj.status in ("reached-t-end", "reached-lambda-stop",
                           "reached-s-stop")
    return 0 if good else 1


def _cmd_experiment(args):
    from .experiments import ExperimentSpec, run_experiment
    if args.spec:
        with open(args.spec) as f:
            data = json.load(f)
        spec = ExperimentSpec.from_dict(data)
    else:
        if not args.kind:
            raise SystemExit("experiment needs --spec FILE or --kind KIND")
        spec = ExperimentSpec(kind=args.kind, dims=args.dim, ps=args.p,
                              E0=args.E0, lambda0=args.lambda0,
                              K=args.K, outdir=args.out)
    report = run_experiment(spec)
    for entry in report["assertions"]:
        tag = "PASS" if entry["ok"] else "FAIL"
        print(f"[{tag}] {entry['name']}: {entry['detail']}")
    print(("PASS" if report["pass"] else "FAIL"),
          f"({spec.kind}) -> {os.path.join(_out_root(spec.outdir), spec.kind)}")
    return 0 if report["pass"] else 1


def build_parser():
    ap = argparse.ArgumentParser(
        prog="mmblow",
        description="Numerical laboratory for minimal-mass blow-up "
                    "of the double-power Schrödinger flow.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("groundstate", help="solve the ground state")
    g.add_argument("--dim", type=int, default=1)
    g.add_argument("--rmax", type=float, default=32.0)
    g.add_argument("--n", type=int, default=2561)
    g.add_argument("--mu", action="store_true",
                   help="also compute the coercivity constant")
    g.add_argument("--out")
    g.set_defaults(fn=_cmd_groundstate)

    pr = sub.add_parser("profile", help="build the blow-up profile")
    pr.add_argument("--dim", type=int, default=1)
    pr.add_argument("--p", type=float, default=2.0)
    pr.add_argument("--K", type=int, default=2)
    pr.add_argument("--out")
    pr.set_defaults(fn=_cmd_profile)

    lw = sub.add_parser("law", help="blow-up law constants and tables")
    lw.add_argument("--dim", type=int, default=1)
    lw.add_argument("--p", type=float, default=2.0)
    lw.add_argument("--E0", type=float, default=0.0)
    lw.add_argument("--lambda0", type=float, default=0.1)
    lw.add_argument("--K", type=int, default=2)
    lw.add_argument("--s-min", type=float, default=10.0)
    lw.add_argument("--s-max", type=float, default=1e4)
    lw.add_argument("--out")
    lw.set_defaults(fn=_cmd_law)

    ev = sub.add_parser("evolve", help="integrate a run config")
    ev.add_argument("--config", required=True,
                    help="JSON file of run parameters")
    ev.add_argument("--snapshots", action="store_true",
                    help="also write every field snapshot")
    ev.add_argument("--out")
    ev.set_defaults(fn=_cmd_evolve)

    ex = sub.add_parser("experiment", help="run a named suite")
    ex.add_argument("--spec", help="JSON experiment spec")
    ex.add_argument("--kind")
    ex.add_argument("--dim", type=int, action="append",
                    default=None)
    ex.add_argument("--p", type=float, action="append", default=None)
    ex.add_argument("--E0", type=float, default=0.0)
    ex.add_argument("--lambda0", type=float, default=0.1)
    ex.add_argument("--K", type=int, default=2)
    ex.add_argument("--out")
    ex.set_defaults(fn=_cmd_experiment)
    return ap


def main(argv=None):
    from .experiments import ExperimentError
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "dim", None) is None and hasattr(args, "dim"):
        args.dim = [1]
    if getattr(args, "p", None) is None and hasattr(args, "p"):
        args.p = [2.0]
    try:
        code = args.fn(args)
    except (ExperimentError, FileNotFoundError, json.JSONDecodeError,
            OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as err:
        print(f"failed: {err}", file=sys.stderr)
        return 1
    return code


if __name__ == "__main__":
    sys.exit(main())
