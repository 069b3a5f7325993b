from __future__ import annotations

import json
import shutil
import subprocess
import sys

import pytest

from ecdlab.cli import EXIT_BUDGET, EXIT_CONFIG, EXIT_NUMERICS, EXIT_OK, main


def cfg_file(tmp_path, body, name="c.ini"):
    p = tmp_path / name
    p.write_text("[experiment]\n" + body)
    return str(p)


def test_list_experiments(capsys):
    assert main(["list-experiments"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "standalone_sweep" in out and "three_level" in out


def test_validate_ok_and_bad(tmp_path, capsys):
    good = cfg_file(tmp_path, "experiment = lzm_dynamics\n")
    assert main(["validate", good]) == EXIT_OK
    assert "ok: lzm_dynamics" in capsys.readouterr().out
    bad = cfg_file(tmp_path, "experiment = lzm_dynamics\ncolour = blue\n", "bad.ini")
    assert main(["validate", bad]) == EXIT_CONFIG
    assert "colour" in capsys.readouterr().err


def test_run_writes_outputs(tmp_path):
    cfg = cfg_file(tmp_path, "experiment = two_qubit\nadiabatic_tau_grid = 5, 10\n")
    out = tmp_path / "out"
    assert main(["run", cfg, "--out", str(out), "--threads", "2"]) == EXIT_OK
    meta = json.loads((out / "results.json").read_text())
    assert meta["summary"]["n_periods"] == 10
    assert (out / "results.csv").read_text().startswith("sweep_var,value,infidelity")


def test_rerun_is_byte_identical(tmp_path):
    cfg = cfg_file(tmp_path, "experiment = standalone_sweep\ntau_grid = 2, 3, 4\n"
                             "adiabatic_tau_grid = 40, 60\nk = 1\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", cfg, "--out", str(a)]) == EXIT_OK
    assert main(["run", cfg, "--out", str(b), "--threads", "3"]) == EXIT_OK
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
    # metadata carries no timestamps, so it is identical too
    assert (a / "results.json").read_bytes() == (b / "results.json").read_bytes()


def test_norm_convention_flag(tmp_path):
    cfg = cfg_file(tmp_path, "experiment = two_qubit\nadiabatic_tau_grid = 5\n")
    out = tmp_path / "sq"
    assert main(["run", cfg, "--out", str(out), "--norm-convention", "sqrt"]) == EXIT_OK
    assert json.loads((out / "results.json").read_text())["config"]["norm_convention"] == "sqrt"


@pytest.mark.parametrize("body", [
    "experiment = ecd_dynamics\nn_periods = 0\nk = 0.0001\n",
    "experiment = ecd_dynamics\nn_periods = 0\nomega = 0.1\n",
])
def test_infeasible_budget_exit_code(tmp_path, body, capsys):
    assert main(["run", cfg_file(tmp_path, body), "--out", str(tmp_path / "o")]) == EXIT_BUDGET
    assert "infeasible" in capsys.readouterr().err


def test_nonconvergence_exit_code(tmp_path, capsys):
    body = ("experiment = robustness\nepsilon = 200\nn_periods = 200\nsteps_per_period = 32\n"
            "delta_grid = 0\n")
    assert main(["run", cfg_file(tmp_path, body), "--out", str(tmp_path / "o")]) == EXIT_NUMERICS
    assert "non-convergence" in capsys.readouterr().err


def test_config_error_exit_codes(tmp_path):
    assert main(["run", str(tmp_path / "missing.ini")]) == EXIT_CONFIG
    cfg = cfg_file(tmp_path, "experiment = lzm_dynamics\n")
    assert main(["run", cfg, "--threads", "0"]) == EXIT_CONFIG
    cfg = cfg_file(tmp_path, "experiment = robustness\nmodel = two_qubit\n", "r.ini")
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


@pytest.mark.skipif(shutil.which("ecdlab") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["ecdlab", "list-experiments"], capture_output=True, text=True)
    assert res.returncode == 0 and "robustness" in res.stdout
    res = subprocess.run([sys.executable, "-m", "ecdlab.cli", "validate", "/nonexistent.ini"],
                         capture_output=True, text=True)
    assert res.returncode == EXIT_CONFIG
