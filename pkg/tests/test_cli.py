import json
import subprocess
import sys

import pytest

from fracavg.cli import main

SMALL = """model = coupled
alpha = 0.6
epsilon = 0.05
h = 0.0025
delta = 0.025
n_mc = 16
eps_list = 0.125, 0.0625, 0.03125, 0.015625, 0.0078125
"""


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(SMALL, encoding="utf-8")
    return path


def read(path):
    return path.read_text(encoding="utf-8")


@pytest.mark.parametrize("what", ["coupled", "auxiliary", "averaged"])
def test_simulate(cfg, tmp_path, what):
    out = tmp_path / f"{what}.csv"
    assert main(["simulate", "--config", str(cfg), "--what", what, "--out", str(out)]) == 0
    lines = read(out).splitlines()
    header = "t,x_1" if what == "averaged" else "t,x_1,y_1"
    assert lines[0] == header and len(lines) == 402


def test_simulate_reproducible(cfg, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        main(["simulate", "--config", str(cfg), "--seed", "3", "--out", str(out)])
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.csv"
    main(["simulate", "--config", str(cfg), "--seed", "4", "--out", str(c)])
    assert c.read_bytes() != a.read_bytes()


def test_average(cfg, tmp_path):
    out = tmp_path / "fbar.csv"
    assert main(["average", "--config", str(cfg), "--out", str(out)]) == 0
    lines = read(out).splitlines()
    assert lines[0] == "x_1,fbar_1,ci_1" and len(lines) == 6


def test_rate_outputs(tmp_path):
    cfg = tmp_path / "rate.cfg"
    cfg.write_text(SMALL.replace("h = 0.0025\n", ""), encoding="utf-8")
    out = tmp_path / "table.csv"
    assert main(["rate", "--config", str(cfg), "--out", str(out)]) == 0
    first = out.read_bytes()
    meta = read(tmp_path / "table.meta.txt")
    for key in ("seed = 1", "version.numpy", "slope = ", "r_squared = ", "moment_uniform = "):
        assert key in meta
    assert main(["rate", "--config", str(cfg), "--out", str(out)]) == 0
    assert out.read_bytes() == first


def test_rate_ergodic_needs_flag(tmp_path, capsys):
    cfg = tmp_path / "e.cfg"
    cfg.write_text("fbar = ergodic\n", encoding="utf-8")
    assert main(["rate", "--config", str(cfg), "--out", str(tmp_path / "x.csv")]) != 0
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "ConfigError" and "allow_estimated_fbar" in err["message"]


def test_validate_ml(capsys):
    assert main(["validate", "ml", "--alpha", "0.5", "--z", "-1"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(0.42758357615580755, rel=1e-15)


def test_validate_assumptions_and_oracles(capsys):
    assert main(["validate", "assumptions"]) == 0
    assert "admissible PASS" in capsys.readouterr().out
    assert main(["validate", "oracles"]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_errors_are_machine_readable(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg"), "--out", "x.csv"]) == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "FileNotFoundError"
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense = 1\n", encoding="utf-8")
    assert main(["simulate", "--config", str(bad), "--out", "x.csv"]) == 2
    assert "unknown key" in json.loads(capsys.readouterr().err.strip())["message"]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "fracavg", "validate", "ml", "--alpha", "1", "--z", "1"],
                         capture_output=True, text=True, check=True)
    assert float(res.stdout) == pytest.approx(2.718281828459045, rel=1e-15)
