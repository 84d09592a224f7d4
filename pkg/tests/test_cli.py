import json
import subprocess
import sys

import pytest

from dephasing.cli import main
from dephasing.config import CACHE_ENV
from dephasing.io import read_csv


@pytest.fixture(autouse=True)
def _no_env_cache(monkeypatch):
    monkeypatch.delenv(CACHE_ENV, raising=False)


def _config(tmp_path, body=None):
    path = tmp_path / "cfg.yaml"
    path.write_text(body or f"model: XX\nL: 4\nstate: {{kind: CDW}}\nobservable: {{site: 0}}\noutput_dir: {tmp_path / 'out'}\n")
    return path


def test_run_prints_manifest_summary(tmp_path, capsys):
    assert main(["run", str(_config(tmp_path))]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["files"] >= 5
    assert (tmp_path / "out" / "manifest.json").exists()


def test_validation_exit_code(tmp_path, capsys):
    cfg = _config(tmp_path, f"model: NOPE\nL: 4\noutput_dir: {tmp_path / 'out'}\n")
    assert main(["run", str(cfg)]) == 1
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_weight_check_exit_code(tmp_path):
    cfg = _config(tmp_path, f"model: XX\nL: 4\nstate: {{kind: CDW}}\nregularization: {{M: 5}}\noutput_dir: {tmp_path / 'o'}\n")
    assert main(["run", str(cfg)]) == 2


def test_cache_commands(tmp_path, capsys):
    path = tmp_path / "x.eqds"
    assert main(["cache", "store", str(path), "--config", str(_config(tmp_path)), "--L", "5"]) == 0
    assert json.loads(capsys.readouterr().out)["L"] == 5
    assert main(["cache", "load", str(path)]) == 0
    assert json.loads(capsys.readouterr().out)["dim"] == 32
    assert main(["cache", "verify", str(path)]) == 0
    capsys.readouterr()
    path.write_bytes(path.read_bytes()[:-3])
    assert main(["cache", "verify", str(path)]) == 3
    assert main(["cache", "store", str(path)]) == 1


def test_toy_command(tmp_path, capsys):
    out = tmp_path / "toy.csv"
    assert main(["toy", "--n", "1e4", "--eps", "0.05", "--out", str(out)]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["N"] == 10_000 and result["sup_error"] < 0.1 and "horizon" in result
    table = read_csv(out)
    assert list(table) == ["t", "dA", "envelope", "abs_error"]
    assert float(table["dA"][0]) == pytest.approx(1.0)


def test_toy_bad_input_exit_code(capsys):
    assert main(["toy", "--n", "0"]) == 1


def test_diagnose_command(tmp_path, capsys):
    assert main(["diagnose", str(_config(tmp_path))]) == 0
    assert (tmp_path / "out" / "diagnostics" / "manifest.json").exists()


def test_figure_command(tmp_path, capsys):
    assert main(["figure", "fig2", "--lmax", "8", "--out", str(tmp_path / "f")]) == 0
    assert (tmp_path / "f" / "non_equilibrating" / "L08_integrator.csv").exists()


def test_figure_small_chain_fails_weight_check(tmp_path, capsys):
    # At L=4 the outermost gaps still carry ~1e-3 of the weight, and half of
    # their kernels fall off the [-max gap, max gap] grid.
    assert main(["figure", "fig2", "--lmax", "4", "--out", str(tmp_path / "f")]) == 2
    assert "refine M" in capsys.readouterr().err
    assert not (tmp_path / "f" / "manifest.json").exists()


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "dephasing.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "dephasing" in proc.stdout
