import csv
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from msc_lab.cli import EXIT_CHECK, EXIT_INVALID, EXIT_IO, EXIT_OK, main, plot_rows
from msc_lab.scenarios import SCHEMA_VERSION, builtin_names
from msc_lab.sim import read_csv


def scenario_file(tmp_path, name="tiny", **over):
    data = {
        "schema": SCHEMA_VERSION,
        "name": name,
        "seed": 1,
        "graph": {"kind": "cycle", "n": 4},
        "scalings": {"members": [{"kind": "rotation", "theta": 0.3, "repeat": 2}, {"kind": "identity", "sign": -1,
                                                                                   "repeat": 2}]},
        "protocol": {"variant": "adaptive_gain", "A": [[0, 1], [-1, 0]], "kappa": 1.0},
        "sim": {"h": 0.01, "T": 2.0, "stride": 5},
        "checks": [{"metric": "gains_monotone", "op": "==", "tol": True}],
    }
    data.update(over)
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(data))
    return path


def test_list(capsys):
    assert main(["list"]) == EXIT_OK
    out = capsys.readouterr().out
    assert all(name in out for name in builtin_names())


def test_spectral_symmetric_pairs(tmp_path, capsys):
    t = time.perf_counter()
    assert main(["spectral", "symmetric_pairs_cycle", "--out", str(tmp_path)]) == EXIT_OK
    assert time.perf_counter() - t < 1.0
    data = json.loads((tmp_path / "symmetric_pairs_cycle.spectral.json").read_text())
    assert data["ok"] and data["kernel_dim"] == 2
    assert "10.2221" in capsys.readouterr().out


def test_spectral_disconnected_reports_failure(tmp_path, capsys):
    path = scenario_file(tmp_path, graph={"kind": "edges", "n": 4, "edges": [[1, 2], [3, 4]]},
                         protocol={"variant": "basic"})
    assert main(["spectral", str(path), "--out", str(tmp_path)]) == EXIT_CHECK
    out = capsys.readouterr().out
    assert "FAIL kernel_dim_equals_d" in out and "graph is disconnected" in out


def test_simulate_writes_csv_and_sidecar(tmp_path):
    path = scenario_file(tmp_path)
    assert main(["simulate", str(path), "--out", str(tmp_path), "--stride", "10", "--seed", "4"]) == EXIT_OK
    header, data = read_csv(tmp_path / "tiny.csv")
    assert header[0] == "t" and "c_4_1" in header
    assert data.shape[0] == 21
    meta = json.loads((tmp_path / "tiny.json").read_text())
    assert meta["seed"] == 4 and meta["scenario"] == "tiny"
    assert meta["materialized"]["seed"] == 4


def test_check_pass_and_fail(tmp_path, capsys):
    path = scenario_file(tmp_path)
    assert main(["check", str(path), "--out", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "tiny.report.json").read_text())
    assert rep["passed"] and rep["info"]["materialized"]["seed"] == 1
    strict = scenario_file(tmp_path, name="strict", checks=[{"metric": "disagreement_final", "op": "<=", "tol": 1e-12}])
    assert main(["check", str(strict), "--out", str(tmp_path)]) == EXIT_CHECK
    assert "FAIL disagreement_final" in capsys.readouterr().out


def test_sweep_summary(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("MSC_LAB_THREADS", "2")
    path = scenario_file(tmp_path)
    assert main(["sweep", str(path), "--seeds", "0-2,5", "--out", str(tmp_path), "--T", "1.0"]) == EXIT_OK
    data = json.loads((tmp_path / "tiny.sweep.json").read_text())
    assert data["seeds"] == [0, 1, 2, 5]
    assert data["metrics"]["gains_monotone"] == {"passed": 4, "runs": 4}
    assert len(data["reports"]) == 4
    assert "passed 4/4" in capsys.readouterr().out


def test_sweep_rejects_bad_thread_setting(tmp_path, monkeypatch):
    monkeypatch.setenv("MSC_LAB_THREADS", "many")
    assert main(["sweep", str(scenario_file(tmp_path)), "--seeds", "0-1", "--out", str(tmp_path)]) == EXIT_INVALID


@pytest.mark.parametrize("kind, series", [("xy", {"x", "y"}), ("component", {"x1", "x2"}), ("norm", {"norm"}),
                                          ("gains", {"c"})])
def test_plotdata_kinds(tmp_path, kind, series):
    main(["simulate", str(scenario_file(tmp_path)), "--out", str(tmp_path)])
    assert main(["plotdata", str(tmp_path / "tiny.csv"), "--kind", kind, "--out", str(tmp_path)]) == EXIT_OK
    with open(tmp_path / f"tiny.{kind}.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["series"] for r in rows} == series
    assert {int(r["agent"]) for r in rows} == {1, 2, 3, 4}


def test_plot_rows_norm_values():
    header = ["t", "x_1_1", "x_1_2"]
    rows = list(plot_rows(header, np.array([[0.0, 3.0, 4.0]]), "norm"))
    assert rows == [(0.0, 1, "norm", 5.0)]


def test_plotdata_rejects_non_trajectory(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,agent\n0,a\n")
    assert main(["plotdata", str(bad), "--out", str(tmp_path)]) == EXIT_INVALID


def test_export_all(tmp_path):
    assert main(["export", "all", "--out", str(tmp_path)]) == EXIT_OK
    assert sorted(p.stem for p in tmp_path.glob("*.json")) == sorted(builtin_names())


def test_validation_exit_code(tmp_path, capsys):
    path = scenario_file(tmp_path, scalings={"members": [{"kind": "rotation", "theta": "pi/2", "repeat": 4}]})
    assert main(["check", str(path)]) == EXIT_INVALID
    assert "scalings.members[0]" in capsys.readouterr().err
    assert main(["check", "no_such_scenario"]) == EXIT_INVALID


def test_io_exit_codes(tmp_path):
    assert main(["check", str(tmp_path / "missing.json")]) == EXIT_IO
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["spectral", "symmetric_pairs_cycle", "--out", str(blocker / "sub")]) == EXIT_IO


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "msc_lab.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "msc-lab" in out.stdout
