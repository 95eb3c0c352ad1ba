import json
import os
import subprocess
import sys

import pytest

from duffing_blowup.cli import main

SMALL = ["--set", "schedule.I_0=1e5", "--set", "schedule.K_max=1", "--set", "schedule.tau_prime=64"]


def run(tmp_path, *argv):
    return main(list(argv) + ["--output-dir", str(tmp_path)])


def read(path):
    with open(path) as fh:
        return json.load(fh)


def test_bad_exponents_exit_4(tmp_path):
    assert run(tmp_path, "build-chart", "--set", "potential.n=2", "--set", "potential.m=1") == 4


def test_exhausted_schedule_exit_2(tmp_path):
    assert run(tmp_path, "construct", "--set", "schedule.tau_prime=1e9") == 2
    assert read(tmp_path / "manifest-construct.json")["exit_code"] == 2


def test_missing_inputs_exit_4(tmp_path):
    assert run(tmp_path, "stability", "--profile", str(tmp_path / "nope.json")) == 4
    assert run(tmp_path, "verify") == 4
    # a header-only log
    (tmp_path / "cycles.csv").write_text("cycle\n")
    (tmp_path / "stages.csv").write_text("stage\n")
    assert run(tmp_path, "verify") == 4


def test_unknown_config_key_exit_4(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"schedule": {"no_such_key": 1}}))
    assert run(tmp_path, "build-chart", "--config", str(cfg)) == 4


def test_build_chart_manifest(tmp_path):
    assert run(tmp_path, "build-chart") == 0
    man = read(tmp_path / "manifest-build-chart.json")
    assert man["exit_code"] == 0 and man["command"] == "build-chart"
    assert set(man["versions"]) >= {"numpy", "scipy", "numba", "backend"}
    for name in man["outputs"]:
        assert (tmp_path / name).exists()
    assert read(tmp_path / "chart_lemmas.json")["passed"]


def test_env_output_dir(tmp_path):
    env = dict(os.environ, DUFFING_BLOWUP_OUTPUT_DIR=str(tmp_path / "envdir"))
    proc = subprocess.run([sys.executable, "-m", "duffing_blowup", "construct", "--set",
                           "schedule.tau_prime=1e9"], env=env, capture_output=True, text=True)
    assert proc.returncode == 2
    assert (tmp_path / "envdir" / "manifest-construct.json").exists()


def test_sigma_zero_construct_is_flat(tmp_path):
    status = run(tmp_path, "construct", "--set", "schedule.sigma_override=0", "--set",
                 "schedule.I_0=1e4", "--set", "schedule.K_max=1")
    assert status == 0
    prof = read(tmp_path / "profile.json")
    assert len(prof["segments"]) == 1
    summary = read(tmp_path / "construction.json")
    assert abs(summary["net_gain"]) < 1e-6 * 1e4


def test_construct_is_deterministic_and_verifies(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "construct", *SMALL) == 0
    assert run(b, "construct", *SMALL) == 0
    for name in ("profile.json", "cycles.csv", "stages.csv", "construction.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    base = ["--set", "verify.quarters=false", *SMALL]
    assert run(a, "verify", *base) == 0
    assert read(a / "verify.json")
    # an impossible tolerance on the quarter fits is a numerical failure, not a crash
    assert run(a, "verify", *SMALL, "--set", "verify.tolerance=1e-6") == 3
    assert read(a / "verify.json")["failed"]


def test_stability_constant(tmp_path, capsys):
    status = run(tmp_path, "stability", "--constant", "1", "--set", "stability.n_iter=50",
                 "--set", "stability.subharmonic=false", "--set",
                 "stability.amplitudes=[0.01, 0.1]")
    assert status == 0
    assert "integral of p over one period = 1" in capsys.readouterr().out
    out = read(tmp_path / "stability.json")
    assert out["negative_control"]["escaped"] and out["scan"]["bounded"]
    assert (tmp_path / "orbit_r1.000e-01.csv").exists()


@pytest.mark.slow
def test_sweep_worker_count_does_not_change_results(tmp_path):
    grid = ["--set", "verify.I0_grid=[1e3, 1e4, 1e5]"]
    assert run(tmp_path / "w1", "sweep", *grid) == 0
    assert run(tmp_path / "w2", "sweep", *grid, "--set", "workers=2") == 0
    assert ((tmp_path / "w1" / "sweep.json").read_bytes()
            == (tmp_path / "w2" / "sweep.json").read_bytes())


def test_harness_run_matches_cli(tmp_path):
    from duffing_blowup import harness
    cfg = harness.load(overrides=["schedule.tau_prime=1e9"], output_dir=str(tmp_path))
    assert harness.run("construct", cfg) == 2
    cfg = harness.load(overrides=["stability.n_iter=20", "stability.subharmonic=false",
                                  "stability.amplitudes=[0.1]"], output_dir=str(tmp_path))
    assert harness.run("stability", cfg, constant=1.0) == 0
    with pytest.raises(KeyError):
        harness.run("nope", cfg)
