import json

import pytest

from emfson.cli import EXIT_CODES, main


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_validate_config(capsys):
    assert main(["validate-config", "--preset", "desk"]) == 0
    assert "arrival_rate: 2.0" in capsys.readouterr().out


def test_bad_config_file(tmp_path, capsys):
    path = tmp_path / "c.yaml"
    path.write_text("radio:\n  alpha: 3\n")
    assert main(["validate-config", "--config", str(path)]) == EXIT_CODES["config"]
    err = _err(capsys)
    assert err["error"] == "config" and "alpha" in err["message"]


def test_usage_errors_are_json(capsys):
    assert main(["sweep", "--seeds", "a,b"]) == EXIT_CODES["config"]
    assert _err(capsys)["error"] == "config"
    assert main(["frobnicate"]) == EXIT_CODES["config"]
    assert main(["validate-config", "--preset", "desk", "--config", "x.yaml"]) == 2


def test_horizon_too_short(tmp_path, capsys):
    code = main(["single", "--preset", "desk", "--seeds", "1", "--horizon", "0",
                 "--out", str(tmp_path)])
    assert code == EXIT_CODES["config"]


def test_missing_results_dir(tmp_path, capsys):
    assert main(["report", str(tmp_path / "nope")]) == EXIT_CODES["io"]
    assert _err(capsys)["error"] == "io"


def test_single_and_report(tmp_path, capsys):
    out = tmp_path / "r"
    assert main(["single", "--preset", "desk", "--seeds", "1", "--horizon", "60",
                 "--cio", "4", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "[cio_4]" in text and "manifest digest:" in text
    assert main(["report", str(out)]) == 0
    assert "manifest ok" in capsys.readouterr().out
    (out / "layout.json").write_text("{}")
    assert main(["report", str(out)]) == EXIT_CODES["simulation"]
    assert "layout.json" in _err(capsys)["message"]
