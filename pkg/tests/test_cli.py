import csv

import pytest
import yaml

from covert_dfrc.cli import build_parser, main


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_selftest_command(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 7


def test_solve_command(tmp_path, capsys):
    assert main(["solve", "--seed", "0", "--scheme", "fpa", "--out", str(tmp_path), "--trials", "2000"]) == 0
    assert "fpa noncolluding" in capsys.readouterr().out
    with open(tmp_path / "fpa-noncolluding-trace.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["iteration"] == "0"
    assert yaml.safe_load((tmp_path / "manifest.yaml").read_text())["seed"] == 0
    assert (tmp_path / "fpa-noncolluding-detection.csv").exists()


def test_solve_rejects_unknown_scheme(tmp_path):
    with pytest.raises(SystemExit):
        main(["solve", "--scheme", "magic", "--out", str(tmp_path)])


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("seed: 2\ntransmit_power: 10.0\n")
    assert main(["solve", "--config", str(cfg), "--scheme", "fpa", "--out", str(tmp_path)]) == 0
    doc = yaml.safe_load((tmp_path / "manifest.yaml").read_text())
    assert doc["config"]["transmit_power"] == 10.0 and doc["seed"] == 2


def test_sweep_command(tmp_path):
    args = ["sweep", "--parameter", "pt_dbw", "--values", "15", "--seeds", "1", "--scheme", "fpa", "--out", str(tmp_path)]
    assert main(args) == 0
    assert (tmp_path / "sweep-pt_dbw.csv").exists()


def test_validate_detection_command(tmp_path, capsys):
    assert main(["validate-detection", "--trials", "100000", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 11
