import csv
import json
import shutil
import subprocess

import pytest

from nlsavg.cli import main
from nlsavg.harness import reference_config


def write_config(tmp_path, **overrides):
    doc = reference_config()
    doc["truncation"] = 6
    doc["integrator"] = {"dt_slow": 1.0 / 512, "T_slow": 0.5}
    doc["epsilon_sweep"] = [0.2, 0.1]
    doc["output"] = {"dir": str(tmp_path / "out")}
    doc["weyl"] = {"frequencies": [1.0, 2**0.5], "terms": [{"k": [1, 0], "c": 1.0}], "T_values": [10, 100]}
    for key, value in overrides.items():
        doc[key] = value
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_converge_happy_path(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["converge", "--config", cfg]) == 0
    out = tmp_path / "out"
    with open(out / "study.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["epsilon", "sup_err_q0", "sup_err_q1", "sup_xi", "wallclock_s"]
    assert len(rows) == 3
    assert json.loads((out / "summary.json").read_text())["error_strictly_decreasing"] is True
    assert "error_ratio_last_first" in capsys.readouterr().out


def test_converge_xi_only_and_threads(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["converge", "--config", cfg, "--xi-only", "--threads", "2", "--out", str(tmp_path / "xi")]) == 0
    assert (tmp_path / "xi" / "study.csv").exists()


def test_missing_config_exits_1(tmp_path, capsys):
    assert main(["converge", "--config", str(tmp_path / "nope.json")]) == 1
    assert "not found" in capsys.readouterr().err


def test_no_config_exits_1(capsys):
    assert main(["simulate"]) == 1
    assert "--config" in capsys.readouterr().err


def test_malformed_config_exits_1(tmp_path, capsys):
    cfg = write_config(tmp_path, grid={"dim": 5, "N": 64})
    assert main(["spectrum", "--config", cfg]) == 1
    assert "schema error at grid/dim" in capsys.readouterr().err
    bad = tmp_path / "broken.json"
    bad.write_text("{not json")
    assert main(["spectrum", "--config", str(bad)]) == 1


def test_usage_errors_exit_1(capsys):
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["simulate", "--epsilon", "abc"]) == 1


def test_blowup_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, integrator={"dt_slow": 1.0 / 512, "T_slow": 0.5, "blowup_threshold": 0.5})
    assert main(["simulate", "--config", cfg]) == 2
    assert "diverged" in capsys.readouterr().err
    assert main(["converge", "--config", cfg]) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_simulate_and_effective_outputs(tmp_path, monkeypatch):
    monkeypatch.setenv("NLSAVG_SEED", "5")
    cfg = write_config(tmp_path)
    assert main(["simulate", "--config", cfg, "--epsilon", "0.05"]) == 0
    assert main(["effective", "--config", cfg]) == 0
    out = tmp_path / "out"
    assert (out / "perturbed_eps0.05.csv").read_text().startswith("tau,k,re_v,im_v,action\n")
    side = json.loads((out / "effective.json").read_text())
    assert side["config"]["averaging"]["seed"] == 5
    first = (out / "perturbed_eps0.05.csv").read_bytes()
    assert main(["simulate", "--config", cfg, "--epsilon", "0.05"]) == 0
    assert (out / "perturbed_eps0.05.csv").read_bytes() == first


def test_spectrum_resonance_weyl(tmp_path, capsys):
    cfg = write_config(tmp_path, truncation=16)
    assert main(["spectrum", "--config", cfg]) == 0
    info = json.loads(capsys.readouterr().out)
    assert 1.5 < info["weyl_exponent"] < 2.5
    assert (tmp_path / "out" / "basis.json").exists()
    assert main(["resonance", "--config", cfg, "--K", "4", "--S", "2"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["K"] == 4 and rep["verdict"] in ("resonant", "non_resonant_at_tolerance")
    assert main(["weyl", "--config", cfg]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert all(r["gap"] <= 2 / r["T"] for r in rows)
    assert (tmp_path / "out" / "weyl.csv").read_text().startswith("T,time_average,haar_average,gap")


def test_weyl_without_section_exits_1(tmp_path):
    doc = reference_config()
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc))
    assert main(["weyl", "--config", str(path), "--out", str(tmp_path)]) == 1


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 12 and all(line.startswith("[PASS]") for line in lines)


def test_selftest_failure_exits_3(monkeypatch):
    import nlsavg.selftest as st

    monkeypatch.setattr(st, "CHECKS", [("forced", lambda tol: (False, "forced failure"))])
    assert main(["selftest"]) == 3


@pytest.mark.skipif(shutil.which("nlsavg") is None, reason="console script not installed")
def test_console_script(tmp_path):
    proc = subprocess.run(["nlsavg", "converge", "--config", str(tmp_path / "missing.json")], capture_output=True, text=True)
    assert proc.returncode == 1 and "not found" in proc.stderr
