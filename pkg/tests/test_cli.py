import csv
import io
import json
import shutil
from pathlib import Path

import pytest

from ipslab.cli import SCHEMAS, format_csv, main

ROOT = Path(__file__).resolve().parents[1]


def write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0], list(csv.reader(io.StringIO("\n".join(lines[1:]))))


def test_check_exact_passes(tmp_path):
    cfg = ROOT / "configs" / "exact_default.json"
    assert main(["check-exact", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    head, rows = read_csv(tmp_path / "check-exact.csv")
    assert head == "# ipslab schema=exact version=1"
    assert rows[0] == SCHEMAS["check-exact"][1]
    assert len(rows) == 51 and all(r[-1] == "true" for r in rows[1:])
    manifest = json.loads((tmp_path / "check-exact.manifest.json").read_text())
    assert manifest["passed"] and manifest["seed"] == 0 and len(manifest["config_sha256"]) == 64


def test_simulate_deterministic(tmp_path):
    doc = {"model": {"s": -1, "d": 1, "L": 5, "layers": [{"nn_rate": 0.5}]},
           "experiment": {"kind": "simulate", "eta": [0, 2], "times": [0.5, 1.0], "replicas": 3000},
           "run": {"seed": 11}}
    cfg = write(tmp_path, doc)
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a"), "--workers", "1"])
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b"), "--workers", "2"])
    a = (tmp_path / "a" / "simulate.csv").read_bytes()
    assert a == (tmp_path / "b" / "simulate.csv").read_bytes()
    head, rows = read_csv(tmp_path / "a" / "simulate.csv")
    assert head == "# ipslab schema=simulate version=1" and rows[0] == SCHEMAS["simulate"][1]
    # particle number is conserved: occupancies sum to two at every time
    for t in ("0.5", "1.0"):
        assert sum(float(r[3]) for r in rows[1:] if r[0] == t) == pytest.approx(2.0)


def test_different_seed_changes_output(tmp_path):
    doc = {"model": {"s": 0, "d": 1, "L": 5, "layers": [{"nn_rate": 0.5}]},
           "experiment": {"kind": "simulate", "eta": [0], "replicas": 500}}
    cfg = write(tmp_path, doc)
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "simulate.csv").read_bytes() != (tmp_path / "b" / "simulate.csv").read_bytes()


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, {"model": {"s": 5}})
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "$.model" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 2


def test_runtime_error_exit_code(tmp_path):
    doc = {"model": {"s": 0, "d": 1, "L": 21, "layers": [{"nn_rate": 0.5}]},
           "experiment": {"kind": "spread", "times": [500.0], "replicas": 10}}
    assert main(["spread", "--config", str(write(tmp_path, doc)), "--out", str(tmp_path)]) == 3


def test_failed_check_exit_code(tmp_path):
    # an absurdly tight z threshold cannot be met by Monte Carlo noise
    doc = {"model": {"s": -1, "d": 1, "L": 4, "layers": [{"nn_rate": 0.5}]},
           "experiment": {"kind": "check-duality", "xis": [[0]], "etas": [[1, 2]], "times": [1.0],
                          "replicas": 2000, "z_threshold": 1e-9}}
    assert main(["check-duality", "--config", str(write(tmp_path, doc)), "--out", str(tmp_path)]) == 1


def test_format_csv_cells():
    text = format_csv("spread", [[1.0, 0.25, True], [2, 0.5, False]])
    assert text.splitlines() == ["# ipslab schema=spread version=1", "t,p_disjoint,se",
                                 "1.0,0.25,true", "2,0.5,false"]


@pytest.mark.parametrize("name", sorted(p.name for p in (ROOT / "configs").glob("*.json")))
def test_shipped_configs_parse(name):
    from ipslab.config import parse_config
    doc = json.loads((ROOT / "configs" / name).read_text())
    assert parse_config(doc).kind in SCHEMAS


def test_console_script_installed():
    assert shutil.which("ipslab") is not None
