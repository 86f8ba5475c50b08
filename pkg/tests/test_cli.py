import csv
import json
import re
import shutil
from pathlib import Path

import pytest

from anisofrac import __version__
from anisofrac.cli import fmt, run

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    return lines[0], list(csv.DictReader(lines[1:]))


@pytest.fixture
def small_config(tmp_path):
    text = (CONFIGS / "default.ini").read_text()
    text = re.sub(r"resolution = 12", "resolution = 6", text)
    path = tmp_path / "small.ini"
    path.write_text(text)
    return path


def test_fmt():
    assert fmt(0.1) == "1.0000000000000001e-01"
    assert fmt(True) == "1" and fmt(3) == "3" and fmt("x") == "x"
    assert float(fmt(2 / 3)) == 2 / 3


def test_check_default_config(tmp_path):
    assert run(["check", "--config", str(CONFIGS / "default.ini"), "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "check.csv")
    assert header.startswith(f"# anisofrac {__version__} config_sha256=")
    assert rows and all(r["status"] == "PASS" for r in rows)
    assert {"constant_2", "constant_pair", "variable"} <= {r["instance"] for r in rows}


def test_check_broken_r_exponent(tmp_path, small_config):
    bad = tmp_path / "bad.ini"
    bad.write_text(small_config.read_text().replace("r = 1.5", "r = 2.2"))
    assert run(["check", "--config", str(bad), "--out", str(tmp_path)]) == 1
    _, rows = read_csv(tmp_path / "check.csv")
    failing = [r for r in rows if r["status"] == "FAIL"]
    assert failing and "RExponentTooLarge" in failing[0]["detail"]


def test_zero_resolution_is_config_error(tmp_path, small_config):
    bad = tmp_path / "bad.ini"
    bad.write_text(small_config.read_text().replace("resolution = 6", "resolution = 0"))
    assert run(["check", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_missing_config_file(tmp_path):
    assert run(["check", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path)]) == 2


def test_norms(tmp_path, small_config):
    assert run(["norms", "--config", str(small_config), "--out", str(tmp_path),
                "--function", "bump:0.5,0.5:0.3"]) == 0
    header, rows = read_csv(tmp_path / "norms.csv")
    assert "config_sha256=" in header
    assert len(rows) == 2


def test_norms_bad_function(tmp_path, small_config):
    assert run(["norms", "--config", str(small_config), "--out", str(tmp_path),
                "--function", "block:0.5,0.5:2,2"]) == 2


def test_apply_op(tmp_path, small_config):
    assert run(["apply-op", "--config", str(small_config), "--out", str(tmp_path),
                "--function", "random:1:3"]) == 0
    _, rows = read_csv(tmp_path / "operator.csv")
    assert len(rows) == 36 and set(rows[0]) == {"x1", "x2", "u", "operator"}


def test_embed_scan(tmp_path):
    text = (CONFIGS / "embed_scan.ini").read_text().replace("8 16 32", "4 8")
    path = tmp_path / "scan.ini"
    path.write_text(text)
    assert run(["embed-scan", "--config", str(path), "--out", str(tmp_path)]) == 0
    _, rows = read_csv(tmp_path / "embed_summary.csv")
    assert [r["resolution"] for r in rows] == ["4", "8"]


def test_solve_outputs(tmp_path, small_config):
    assert run(["solve", "--config", str(small_config), "--out", str(tmp_path)]) == 0
    for name in ("solution.csv", "iterations.csv", "geometry.csv"):
        assert (tmp_path / name).read_text().startswith("# anisofrac ")
    lines = (tmp_path / "summary.jsonl").read_text().splitlines()
    head, rec = json.loads(lines[0]), json.loads(lines[1])
    assert head["version"] == __version__ and len(head["config_sha256"]) == 64
    assert set(rec) == {"lambda", "lambda_star", "delta", "theta", "J_value", "grad_norm",
                        "iterations", "node_count"}
    assert rec["J_value"] < 0 and rec["node_count"] == 36


def test_formats_gate(tmp_path, small_config):
    path = tmp_path / "csvonly.ini"
    path.write_text(small_config.read_text().replace("formats = csv jsonl", "formats = csv"))
    out = tmp_path / "o"
    assert run(["solve", "--config", str(path), "--out", str(out)]) == 0
    assert not (out / "summary.jsonl").exists() and (out / "solution.csv").exists()


def test_console_script_installed():
    assert shutil.which("anisofrac") is not None
