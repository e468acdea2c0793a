import csv
import json
import math
from pathlib import Path

import pytest

from miocp_sensitivity import __version__
from miocp_sensitivity.cli import main, parse_config, ConfigError, run

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_config(tmp_path, obj, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def example1_config(command="solve", lam=None):
    return {
        "instance": {"kind": "example1", "tf": 1.0, "n_cells": 4, "center": 0.0, "radius": 1.0},
        "experiment": {"command": command, "lambda": lam or {"values": [-1.0]}},
        "seed": 0,
    }


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_solve_prints_summary(tmp_path, capsys):
    cfg = write_config(tmp_path, example1_config())
    assert main(["--config", cfg, "--out", str(tmp_path / "out")]) == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("nu = -2.718282")
    rows = read_rows(tmp_path / "out" / "samples.csv")
    assert len(rows) == 1
    assert float(rows[0]["nu"]) == pytest.approx(-math.e, abs=1e-14)
    assert rows[0]["version"] == __version__


@pytest.mark.parametrize("patch", [
    {"extra": 1},
    {"experiment": {"command": "solve", "lambda": {"values": [0.0]}, "colour": "red"}},
    {"instance": {"kind": "example1", "n_cells": 4, "bogus": 2}},
    {"experiment": {"command": "optimize"}},
])
def test_unknown_keys_exit_2(tmp_path, capsys, patch):
    cfg = {**example1_config(), **patch}
    assert main(["--config", write_config(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err


def test_parse_config_rejects_two_lambda_specs():
    raw = example1_config(lam={"values": [0.0], "linspace": {"n": 3}})
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_malformed_json_exit_2(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert run(str(p), quiet=True) == 2


def test_lambda_outside_ball_exit_2(tmp_path):
    cfg = write_config(tmp_path, example1_config(lam={"values": [3.0]}))
    assert run(cfg, out=str(tmp_path / "o"), quiet=True) == 2


def test_reruns_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path, example1_config("lipschitz", {"linspace": {"n": 5}}))
    assert run(cfg, out=str(tmp_path / "a"), quiet=True) == 0
    assert run(cfg, out=str(tmp_path / "b"), jobs=1, quiet=True) == 0
    for name in ("samples.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert b"\r\n" not in (tmp_path / "a" / "samples.csv").read_bytes()


def test_report_round_trip(tmp_path):
    cfg = write_config(tmp_path, example1_config("lipschitz", {"linspace": {"n": 5}}))
    assert run(cfg, out=str(tmp_path / "o"), quiet=True) == 0
    text = (tmp_path / "o" / "report.json").read_text()
    obj = json.loads(text)
    assert obj["version"] == __version__
    assert obj["lipschitz"]["pass"]["hat_L"] is True
    assert json.dumps(obj, sort_keys=True, indent=2) + "\n" == text
    for v, ref in zip(obj["values"], [-math.e, -math.e / 2, 0.0, 0.5, 1.0]):
        assert v == pytest.approx(ref, abs=1e-14)
    meta = json.loads((tmp_path / "o" / "meta.json").read_text())
    assert len(meta["config_sha256"]) == 64 and "total" in meta["timings"]


def test_one_sample_sweep_matches_solve(tmp_path):
    cfg = write_config(tmp_path, example1_config(lam={"values": [0.3]}))
    assert run(cfg, command="solve", out=str(tmp_path / "s"), quiet=True) == 0
    assert run(cfg, command="sweep", out=str(tmp_path / "w"), quiet=True) == 0
    assert (tmp_path / "s" / "samples.csv").read_bytes() == (tmp_path / "w" / "samples.csv").read_bytes()


def test_kink_command(tmp_path):
    assert run(str(CONFIGS / "example1_kink.json"), out=str(tmp_path), quiet=True) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["kinks"] == [0.0]


def test_empty_admissible_set_exit_3(tmp_path):
    cfg = {
        "instance": {"kind": "heat", "nx": 6, "n_cells": 4, "delta": 0.25, "eps": -0.5, "tf": 1.0,
                     "radius": 0.0},
        "experiment": {"command": "solve", "caps": {"max_switches": 0}},
        "seed": 0,
    }
    assert run(write_config(tmp_path, cfg), out=str(tmp_path / "o"), quiet=True) in (2, 3)


def test_shipped_configs_parse():
    for p in sorted(CONFIGS.glob("*.json")):
        parse_config(json.loads(p.read_text()))
