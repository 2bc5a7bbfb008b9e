"""Command-line interface: subcommands, exit codes, output files."""

import json
import subprocess
import sys

import numpy as np
import pytest

SMALL = {
    "name": "cli-small",
    "model": {
        "kind": "linear_gaussian",
        "f": {"type": "identity"},
        "h": {"type": "identity"},
        "state_noise": {"kind": "iid", "density": {"family": "gaussian", "sigma": 1.0}},
        "obs_noise": {"family": "gaussian", "sigma": 1.0},
    },
    "prior1": {"family": "normal", "mean": -3.0, "std": 1.0},
    "prior2": {"family": "normal", "mean": 3.0, "std": 1.0},
    "horizon": 10,
    "seeds": [5, 6],
    "repr": {"kind": "grid", "nodes": 128, "paired": True},
    "bound": {"alpha": 0.5, "eta": 0.1, "d_mode": "recorded"},
}


def _run(*args, cwd):
    return subprocess.run([sys.executable, "-m", "ldlab.cli", *args],
                          capture_output=True, text=True, cwd=cwd)


@pytest.fixture()
def config_file(tmp_path):
    p = tmp_path / "scenario.json"
    p.write_text(json.dumps(SMALL))
    return p


def test_simulate_writes_csv(tmp_path, config_file):
    out = tmp_path / "sim"
    r = _run("simulate", "--config", str(config_file), "--out", str(out),
             cwd=tmp_path)
    assert r.returncode == 0, r.stderr
    rows = (out / "sim.csv").read_text().splitlines()
    assert rows[0] == "n,state,obs"
    assert len(rows) == 1 + 11


def test_experiment_full_run(tmp_path, config_file):
    out = tmp_path / "exp"
    r = _run("experiment", "--config", str(config_file), "--out", str(out),
             cwd=tmp_path)
    assert r.returncode == 0, r.stderr
    assert (out / "tv.csv").exists()
    report = json.loads((out / "report.json").read_text())
    assert report["seed"] == 5
    assert report["fit"]["slope"] < 0
    assert report["bound"]["final"]["headline"] <= 1.0


def test_filter_subcommand_skips_bound(tmp_path, config_file):
    out = tmp_path / "flt"
    r = _run("filter", "--config", str(config_file), "--out", str(out),
             cwd=tmp_path)
    assert r.returncode == 0, r.stderr
    report = json.loads((out / "report.json").read_text())
    assert report["bound"] is None
    assert (out / "tv.csv").exists()


def test_bound_subcommand_and_eta_override(tmp_path, config_file):
    out = tmp_path / "bnd"
    r = _run("bound", "--config", str(config_file), "--eta", "0.3",
             "--out", str(out), cwd=tmp_path)
    assert r.returncode == 0, r.stderr
    assert "headline=" in r.stdout
    report = json.loads((out / "report.json").read_text())
    assert report["bound"]["parameters"]["eta"] == 0.3
    lines = (out / "bound.csv").read_text().splitlines()
    assert lines[0].startswith("i,")


def test_preset_and_config_are_exclusive(tmp_path, config_file):
    r = _run("experiment", "--config", str(config_file), "--preset", "rw-gauss",
             cwd=tmp_path)
    assert r.returncode == 2
    r = _run("experiment", cwd=tmp_path)
    assert r.returncode == 2


def test_unknown_preset_is_config_error(tmp_path):
    r = _run("experiment", "--preset", "not-a-preset", cwd=tmp_path)
    assert r.returncode == 2
    assert "unknown preset" in r.stderr


def test_invalid_config_reports_every_problem(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"name": "bad", "horizon": -1, "seeds": [1, 1]}))
    r = _run("experiment", "--config", str(p), cwd=tmp_path)
    assert r.returncode == 2
    assert "prior1" in r.stderr and "horizon" in r.stderr


def test_failed_run_exits_three_with_partial_report(tmp_path):
    bad = dict(SMALL)
    bad["name"] = "cli-degenerate"
    bad["model"] = dict(SMALL["model"])
    bad["model"]["state_noise"] = {"kind": "iid",
                                   "density": {"family": "gaussian", "sigma": 0.01}}
    bad["model"]["obs_noise"] = {"family": "gaussian", "sigma": 0.01}
    bad["prior1"] = {"family": "normal", "mean": -5.0, "std": 0.1}
    bad["prior2"] = {"family": "normal", "mean": 5.0, "std": 0.1}
    p = tmp_path / "degen.json"
    p.write_text(json.dumps(bad))
    out = tmp_path / "degen"
    r = _run("experiment", "--config", str(p), "--out", str(out), cwd=tmp_path)
    assert r.returncode == 3
    report = json.loads((out / "report.json").read_text())
    assert report["failure"] is not None


def test_mc_subcommand(tmp_path, config_file):
    out = tmp_path / "mc"
    r = _run("mc", "--config", str(config_file), "--replicates", "2",
             "--out", str(out), cwd=tmp_path)
    assert r.returncode == 0, r.stderr
    rows = (out / "mc_tv.csv").read_text().splitlines()
    assert rows[0] == "n,mean_tv,stderr_tv"
    assert len(rows) == 1 + 11
    payload = json.loads((out / "report.json").read_text())
    assert payload["replicates"] == 2
    assert len(payload["per_replicate"]) == 2


def test_seed_override_changes_output(tmp_path, config_file):
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    r1 = _run("experiment", "--config", str(config_file), "--out", str(out1),
              cwd=tmp_path)
    r2 = _run("experiment", "--config", str(config_file), "--seed", "99",
              "--out", str(out2), cwd=tmp_path)
    assert r1.returncode == 0 and r2.returncode == 0
    a = np.loadtxt(out1 / "tv.csv", delimiter=",", skiprows=1)
    b = np.loadtxt(out2 / "tv.csv", delimiter=",", skiprows=1)
    assert not np.allclose(a[:, 1], b[:, 1])
    assert json.loads((out2 / "report.json").read_text())["seed"] == 99


def test_version_flag():
    r = subprocess.run([sys.executable, "-m", "ldlab.cli", "--version"],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert r.stdout.strip()
