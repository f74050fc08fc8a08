import json
import subprocess
import sys

import numpy as np
import pytest

from onebit_bilr.cli import main
from onebit_bilr.experiments import CSV_HEADER, read_records


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"scheme": "pbp", "n": 4, "s": 2, "r": 1, "m_grid": [40, 160],
                                "trials_per_m": 3, "master_seed": 5}))
    return path


def test_experiment_writes_csv(tmp_path, small_config, capsys):
    out = tmp_path / "results.csv"
    code, _, _ = run(["experiment", "--config", str(small_config), "--out", str(out)], capsys)
    assert code == 0
    text = out.read_bytes().decode()
    assert text.split("\n")[0] == CSV_HEADER
    assert len(read_records(out)) == 6
    again = tmp_path / "again.csv"
    run(["experiment", "--config", str(small_config), "--out", str(again)], capsys)
    assert again.read_bytes() == out.read_bytes()


def test_experiment_seed_override_and_json(tmp_path, small_config, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(["experiment", "--config", str(small_config), "--out", str(a), "--format", "json"], capsys)
    run(["experiment", "--config", str(small_config), "--out", str(b), "--format", "json", "--seed", "6"], capsys)
    assert json.loads(a.read_text())[0]["seed"] != json.loads(b.read_text())[0]["seed"]


def test_fit_prints_json(tmp_path, small_config, capsys):
    out = tmp_path / "results.csv"
    run(["experiment", "--config", str(small_config), "--out", str(out)], capsys)
    code, text, _ = run(["fit", "--in", str(out)], capsys)
    assert code == 0
    doc = json.loads(text)
    assert set(doc) == {"slope", "intercept"} and np.isfinite(doc["slope"])


def test_missing_config_exit_2(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    code, _, err = run(["experiment", "--config", str(missing)], capsys)
    assert code == 2
    assert str(missing) in err


def test_invalid_config_exit_1(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"scheme": "pbp", "bogus": 1}))
    code, _, err = run(["experiment", "--config", str(path)], capsys)
    assert code == 1 and "bogus" in err


def test_usage_errors_exit_1(capsys):
    assert run(["frobnicate"], capsys)[0] == 1
    assert run([], capsys)[0] == 1
    assert run(["generate", "--n", "4"], capsys)[0] == 1


def test_generate_sense_recover_roundtrip(tmp_path, capsys):
    sig, meas = tmp_path / "x.json", tmp_path / "y.json"
    assert run(["generate", "--n", "5", "--s", "2", "--r", "1", "--seed", "3", "--out", str(sig)], capsys)[0] == 0
    assert run(["sense", "--in", str(sig), "--m", "2000", "--seed", "1", "--out", str(meas)], capsys)[0] == 0
    code, text, _ = run(["recover", "--in", str(meas), "--s", "2", "--r", "1"], capsys)
    assert code == 0
    X = np.array(json.loads(sig.read_text())["matrix"])
    est = np.array(json.loads(text)["matrix"])
    assert np.linalg.norm(X - est / np.linalg.norm(est)) < 0.5


def test_factorized_roundtrip(tmp_path, capsys):
    sig, meas = tmp_path / "x.json", tmp_path / "y.json"
    run(["generate", "--n", "6", "--s", "2", "--r", "1", "--out", str(sig)], capsys)
    assert run(["sense", "--in", str(sig), "--m", "300", "--scheme", "factorized", "--p", "9",
                "--out", str(meas)], capsys)[0] == 0
    code, text, _ = run(["recover", "--in", str(meas), "--s", "2", "--r", "1"], capsys)
    assert code == 0 and json.loads(text)["metadata"]["scheme"] == "multistep"
    assert run(["sense", "--in", str(sig), "--m", "30", "--scheme", "factorized"], capsys)[0] == 1


def test_generate_csv(capsys):
    code, text, _ = run(["generate", "--n", "3", "--s", "1", "--r", "1", "--format", "csv"], capsys)
    rows = [line.split(",") for line in text.strip().split("\n")]
    assert code == 0 and len(rows) == 3 and all(len(r) == 3 for r in rows)


def test_rip_audit(capsys):
    code, text, _ = run(["rip-audit", "--n", "6", "--m", "500", "--s", "2", "--r", "1", "--trials", "20"], capsys)
    doc = json.loads(text)
    assert code == 0 and doc["property_kind"] == "l1-bilr" and doc["samples"] == 20


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "onebit_bilr", "generate", "--n", "2", "--s", "1", "--r", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "matrix" in json.loads(proc.stdout)
