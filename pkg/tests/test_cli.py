import json
import math
import subprocess
import sys

import numpy as np
import pytest

from groupoid_mechanics.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_config(tmp_path, name="cfg.json", **fields):
    path = tmp_path / name
    path.write_text(json.dumps(fields), encoding="utf-8")
    return str(path)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def test_simulate_harmonic_csv(capsys, tmp_path):
    out = tmp_path / "run.csv"
    code, _, _ = run_cli(capsys, "simulate", "--system", "harmonic",
                         "--h", "0.1", "--steps", "10", "--out", str(out))
    assert code == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == ("step,t,q0,p0,energy_or_casimir,"
                        "del_residual,composability_gap")
    assert len(lines) == 12  # header + 11 data rows
    energies = [float(line.split(",")[4]) for line in lines[1:]]
    assert all(round(e, 4) == round(energies[0], 4) for e in energies)


def test_simulate_zero_steps_single_row(capsys, tmp_path):
    out = tmp_path / "run.csv"
    code, _, _ = run_cli(capsys, "simulate", "--steps", "0", "--out", str(out))
    assert code == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 2


def test_simulate_unknown_system_lists_registry(capsys):
    code, _, err = run_cli(capsys, "simulate", "--system", "nonsense")
    assert code == 2
    for name in ("harmonic", "pendulum", "kepler", "rigid-body"):
        assert name in err


def test_simulate_configuration_pair_initial(capsys, tmp_path):
    cfg = write_config(tmp_path, system="harmonic", h=0.1, steps=5,
                       initial={"q0": [1.0], "q1": [1.0]})
    code, out, _ = run_cli(capsys, "simulate", "--config", cfg)
    assert code == 0
    rows = out.splitlines()
    assert len(rows) == 7
    first = rows[1].split(",")
    assert float(first[2]) == pytest.approx(1.0)
    assert float(first[3]) == pytest.approx(0.05)


def test_simulate_rigid_body_quaternions(capsys, tmp_path):
    cfg = write_config(tmp_path, system="rigid-body", h=0.05, steps=20,
                       j_d=[[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0]],
                       initial={"Pi0": [1.0, 0.5, -0.3]})
    code, out, _ = run_cli(capsys, "simulate", "--config", cfg)
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("step,t,qw,qx,qy,qz,Pi0,Pi1,Pi2")
    assert len(lines) == 22
    for line in lines[1:]:
        cells = [float(v) for v in line.split(",")[2:6]]
        assert math.hypot(*cells) == pytest.approx(1.0, abs=1e-12)
    casimirs = [float(line.split(",")[9]) for line in lines[1:]]
    assert max(casimirs) - min(casimirs) < 1e-10


def test_simulate_invalid_h(capsys, tmp_path):
    cfg = write_config(tmp_path, system="harmonic", h=-0.1)
    code, _, err = run_cli(capsys, "simulate", "--config", cfg)
    assert code == 2
    assert "positive" in err


def test_simulate_malformed_config(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json", encoding="utf-8")
    code, _, err = run_cli(capsys, "simulate", "--config", str(path))
    assert code == 2
    assert "JSON" in err


def test_simulate_byte_identical_reruns(capsys, tmp_path):
    cfg = write_config(tmp_path, system="pendulum", h=0.05, steps=50, seed=3,
                       initial={"q0": [0.4], "p0": [0.2]})
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    assert run_cli(capsys, "simulate", "--config", cfg, "--out", str(out1))[0] == 0
    assert run_cli(capsys, "simulate", "--config", cfg, "--out", str(out2))[0] == 0
    assert out1.read_bytes() == out2.read_bytes()


# ---------------------------------------------------------------------------
# convergence
# ---------------------------------------------------------------------------

def test_convergence_harmonic_second_order(capsys, tmp_path):
    cfg = write_config(tmp_path, system="harmonic", T=1.0,
                       h_list=[0.1, 0.05, 0.025, 0.0125])
    code, out, _ = run_cli(capsys, "convergence", "--config", cfg)
    assert code == 0
    report = json.loads(out)
    assert 1.9 <= report["slope"] <= 2.1


def test_convergence_trapezoid_second_order(capsys, tmp_path):
    cfg = write_config(tmp_path, system="harmonic", scheme="trapezoid", T=1.0,
                       h_list=[0.1, 0.05, 0.025, 0.0125])
    code, out, _ = run_cli(capsys, "convergence", "--config", cfg)
    assert code == 0
    assert 1.9 <= json.loads(out)["slope"] <= 2.1


def test_convergence_single_h_null_slope(capsys, tmp_path):
    cfg = write_config(tmp_path, system="harmonic", T=1.0, h_list=[0.1])
    code, out, _ = run_cli(capsys, "convergence", "--config", cfg)
    assert code == 0
    assert json.loads(out)["slope"] is None


def test_convergence_pendulum_rk4_reference(capsys, tmp_path):
    cfg = write_config(tmp_path, system="pendulum", T=1.0,
                       h_list=[0.1, 0.05, 0.025],
                       initial={"q0": [0.4], "p0": [0.3]})
    code, out, _ = run_cli(capsys, "convergence", "--config", cfg)
    assert code == 0
    assert 1.85 <= json.loads(out)["slope"] <= 2.15


def test_convergence_thread_cap_env(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("GROUPOID_INT_THREADS", "1")
    cfg = write_config(tmp_path, system="harmonic", T=1.0, h_list=[0.1, 0.05])
    code, out, _ = run_cli(capsys, "convergence", "--config", cfg)
    assert code == 0
    assert len(json.loads(out)["errors"]) == 2


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def test_verify_all_harmonic(capsys, tmp_path):
    cfg = write_config(tmp_path, system="harmonic", seed=7)
    code, out, _ = run_cli(capsys, "verify", "--config", cfg, "--which", "all")
    assert code == 0
    report = json.loads(out)
    assert report["pass"] is True
    assert set(report["checks"]) == {"groupoid", "symplectic", "hp", "leok-ohsawa"}
    assert report["seed"] == 7


def test_verify_hp_pendulum(capsys, tmp_path):
    cfg = write_config(tmp_path, system="pendulum", N=3, seed=1,
                       initial={"q0": [0.3], "p0": [0.1]})
    code, out, _ = run_cli(capsys, "verify", "--config", cfg, "--which", "hp")
    assert code == 0
    checks = json.loads(out)["checks"]["hp"]
    assert checks["pass"] is True
    assert checks["max_differential"] < 1e-8


def test_verify_symplectic_seeded(capsys, tmp_path):
    cfg = write_config(tmp_path, system="pendulum", states=25, seed=7)
    code, out, _ = run_cli(capsys, "verify", "--config", cfg,
                           "--which", "symplectic")
    assert code == 0
    assert json.loads(out)["checks"]["symplectic"]["max_defect"] < 1e-8


def test_verify_degenerate_exit_three(capsys, tmp_path):
    cfg = write_config(tmp_path, system="degenerate", states=3)
    code, _, err = run_cli(capsys, "verify", "--config", cfg,
                           "--which", "symplectic")
    assert code == 3
    assert "numerical failure" in err


def test_verify_unknown_which(capsys, tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["verify", "--which", "bogus"])
    assert err.value.code == 2


def test_verify_byte_identical_reruns(capsys, tmp_path):
    cfg = write_config(tmp_path, system="harmonic", seed=11, states=20, cases=50)
    out1 = tmp_path / "a.json"
    out2 = tmp_path / "b.json"
    assert run_cli(capsys, "verify", "--config", cfg, "--out", str(out1))[0] == 0
    assert run_cli(capsys, "verify", "--config", cfg, "--out", str(out2))[0] == 0
    assert out1.read_bytes() == out2.read_bytes()


# ---------------------------------------------------------------------------
# compare-leok-ohsawa
# ---------------------------------------------------------------------------

def test_compare_leok_ohsawa(capsys, tmp_path):
    cfg = write_config(tmp_path, system="pendulum", N=3,
                       initial={"q0": [0.2], "p0": [0.25]})
    code, out, _ = run_cli(capsys, "compare-leok-ohsawa", "--config", cfg)
    assert code == 0
    report = json.loads(out)
    assert report["max_gap"] < 1e-8
    assert len(report["interior_points"]["leok_ohsawa"]) == 2


# ---------------------------------------------------------------------------
# console entry point
# ---------------------------------------------------------------------------

def test_console_script_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "groupoid_mechanics.cli", "simulate",
         "--system", "harmonic", "--steps", "3"],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0].startswith("step,t,q0,p0")
