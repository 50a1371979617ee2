"""Fit helpers, experiment specs, and command-line smoke tests."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from mmblow import law
from mmblow.experiments import (ExperimentError, ExperimentSpec,
                                asymptotic_entry_scale, fit_blowup_time,
                                output_root, rate_exponents, rate_fit)


def power_series(exponent, constant, t_star=0.0, n=60):
    t = -np.geomspace(1.0, 0.01, n) + t_star
    return list(zip(t, constant * np.abs(t - t_star) ** exponent))


def test_rate_fit_recovers_power_law():
    fit = rate_fit(power_series(0.8, 2.5))
    assert fit.exponent == pytest.approx(0.8, rel=1e-10)
    assert fit.constant == pytest.approx(2.5, rel=1e-10)
    assert fit.r2 > 1.0 - 1e-12
    assert fit.window[0] > fit.window[1] > 0.0  # (max, min) of fitted values
    d = fit.as_dict()
    assert set(d) == {"exponent", "constant", "r2", "window"}


def test_rate_fit_guards():
    with pytest.raises(ValueError):
        rate_fit(power_series(0.8, 2.5, n=10))          # too few samples
    t = -np.linspace(1.0, 0.9, 30)
    with pytest.raises(ValueError):
        rate_fit(list(zip(t, np.abs(t) ** 0.8)))        # < decade of span
    bad = power_series(0.8, 2.5)
    bad[5] = (bad[5][0], -1.0)
    with pytest.raises(ValueError):
        rate_fit(bad)                                    # nonpositive value


def test_fit_blowup_time():
    series = power_series(0.75, 3.0, t_star=0.013)
    t_star = fit_blowup_time(series)
    assert t_star == pytest.approx(0.013, abs=1e-8)
    fit = rate_fit(series, t_star=t_star)
    assert fit.exponent == pytest.approx(0.75, rel=1e-6)


def test_rate_exponents_values():
    assert rate_exponents(1, 2.0) == pytest.approx((0.8, 0.6))
    assert rate_exponents(2, 2.0) == pytest.approx((2.0 / 3.0, 1.0 / 3.0))
    assert rate_exponents(1, 1.7) == pytest.approx((0.72727272727, 0.4545454545))


def test_spec_from_dict():
    spec = ExperimentSpec.from_dict({"kind": "verify-statics", "dims": [1]})
    assert spec.kind == "verify-statics" and spec.dims == [1]
    with pytest.raises(ExperimentError):
        ExperimentSpec.from_dict({"kind": "verify-statics", "bogus": 1})
    with pytest.raises(ExperimentError):
        ExperimentSpec.from_dict({"dims": [1]})


def test_output_root(monkeypatch, tmp_path):
    spec = ExperimentSpec(kind="verify-statics", dims=[1], ps=[2.0],
                          outdir=str(tmp_path / "explicit"))
    assert output_root(spec) == str(tmp_path / "explicit")
    spec2 = ExperimentSpec(kind="verify-statics", dims=[1], ps=[2.0])
    monkeypatch.setenv("MMBLOW_OUT", str(tmp_path / "env"))
    assert output_root(spec2) == str(tmp_path / "env")
    monkeypatch.delenv("MMBLOW_OUT")
    assert output_root(spec2) == os.path.join(os.getcwd(), "mmblow-out")


def test_asymptotic_entry_scale(expansion_of):
    exp = expansion_of(1)
    c = law.make_constants(exp, E0=0.0, lambda0=0.3)
    assert asymptotic_entry_scale(exp, c) == pytest.approx(0.052791, rel=1e-3)
    exp2 = expansion_of(2)
    c2 = law.make_constants(exp2, E0=0.0, lambda0=0.2)
    assert asymptotic_entry_scale(exp2, c2) == pytest.approx(0.0093509,
                                                             rel=1e-3)
    # tightening the defect budget can only shrink the entry scale
    assert (asymptotic_entry_scale(exp, c, frac=0.01)
            < asymptotic_entry_scale(exp, c, frac=0.05))


def mmblow_cmd(*args, env_extra=None):
    env = dict(os.environ)
    if env_extra:
        env.update(env_extra)
    return subprocess.run([sys.executable, "-m", "mmblow", *args],
                          capture_output=True, text=True, env=env)


def test_cli_requires_subcommand():
    res = mmblow_cmd()
    assert res.returncode == 2


def test_cli_groundstate(tmp_path):
    res = mmblow_cmd("groundstate", "--dim", "1",
                     env_extra={"MMBLOW_OUT": str(tmp_path)})
    assert res.returncode == 0, res.stderr
    assert "Q(0)=1.316074013" in res.stdout
    outdir = tmp_path / "groundstate"
    assert (outdir / "Q_dim1.csv").exists()
    report = json.loads((outdir / "summary_dim1.json").read_text())
    assert report["norms"]["mass"] == pytest.approx(2.7206990463513775,
                                                    rel=1e-10)


def test_cli_evolve_rejects_bad_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dim": 1, "p": 2.0, "t1": 0.5}))
    res = mmblow_cmd("evolve", "--config", str(cfg),
                     env_extra={"MMBLOW_OUT": str(tmp_path)})
    assert res.returncode == 2
    assert "invalid run config" in res.stderr


def test_cli_experiment_unknown_kind(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "no-such-suite"}))
    res = mmblow_cmd("experiment", "--spec", str(spec),
                     env_extra={"MMBLOW_OUT": str(tmp_path)})
    assert res.returncode == 2


def test_cli_experiment_statics(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "verify-statics", "dims": [1],
                                "ps": [2.0]}))
    res = mmblow_cmd("experiment", "--spec", str(spec),
                     env_extra={"MMBLOW_OUT": str(tmp_path)})
    assert res.returncode == 0, res.stdout + res.stderr
    assert "[PASS]" in res.stdout
    summary = json.loads(
        (tmp_path / "verify-statics" / "summary.json").read_text())
    assert summary["pass"] is True
