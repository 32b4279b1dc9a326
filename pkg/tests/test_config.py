import json

import pytest

from ipslab.config import KINDS, ConfigError, load_schema, parse_config

SEP = {"model": {"s": -1, "d": 1, "L": 4, "layers": [{"nn_rate": 0.5}]}}


def with_experiment(**exp):
    return {**SEP, "experiment": exp}


def test_minimal_config_gets_defaults():
    cfg = parse_config(SEP, kind="check-duality")
    assert cfg.kind == "check-duality"
    assert cfg.params["replicas"] == 100_000 and cfg.params["times"] == [0.5, 1.0]
    assert cfg.run.seed == 0 and cfg.run.workers == 1
    assert cfg.model.alpha == 1 and cfg.model.num_sites == 4


def test_accepts_json_text():
    assert parse_config(json.dumps(SEP), kind="simulate").kind == "simulate"


def test_kind_mismatch():
    with pytest.raises(ConfigError, match="does not match"):
        parse_config(with_experiment(kind="couple"), kind="spread")


def test_asymmetric_switch_matrix_rejected():
    doc = {"model": {"s": -1, "d": 1, "L": 4, "layers": [{"nn_rate": 0.5}, {"nn_rate": 0.5}],
                     "c": [[0, 1.0], [0.5, 0]]}}
    with pytest.raises(ConfigError) as exc:
        parse_config(doc, kind="simulate")
    assert any("$.model" in v for v in exc.value.violations)


def test_active_rtp_needs_velocities():
    doc = {"model": {"s": 0, "d": 1, "L": 4, "lambda": 0.8, "layers": [{"nn_rate": 0.5}]}}
    with pytest.raises(ConfigError):
        parse_config(doc, kind="simulate")


def test_partial_velocities_rejected():
    doc = {"model": {"s": 0, "d": 1, "L": 4, "lambda": 0.8, "c": [[0, 1], [1, 0]],
                     "layers": [{"nn_rate": 0.5, "velocity": [1]}, {"nn_rate": 0.5}]}}
    with pytest.raises(ConfigError, match="velocity for every layer"):
        parse_config(doc, kind="simulate")


def test_unknown_key_reports_path():
    doc = with_experiment(kind="simulate", replicas=10, bogus=1)
    with pytest.raises(ConfigError) as exc:
        parse_config(doc)
    assert any(v.startswith("$.experiment") for v in exc.value.violations)
    doc = {"model": {**SEP["model"], "colour": "red"}}
    with pytest.raises(ConfigError) as exc:
        parse_config(doc, kind="simulate")
    assert any(v.startswith("$.model") and "colour" in v for v in exc.value.violations)


def test_all_violations_collected():
    doc = {"model": {"s": 2, "d": 0, "L": 4, "layers": []}}
    with pytest.raises(ConfigError) as exc:
        parse_config(doc, kind="simulate")
    assert len(exc.value.violations) >= 3


def test_site_out_of_range():
    with pytest.raises(ConfigError, match=r"\$\.experiment\.eta"):
        parse_config(with_experiment(kind="simulate", eta=[9]))


def test_structured_sites():
    doc = {"model": {"s": -1, "d": 2, "L": 3, "layers": [{"nn_rate": 0.5}, {"nn_rate": 0.5}],
                     "c": [[0, 1], [1, 0]]},
           "experiment": {"kind": "simulate", "eta": [{"x": [1, 2], "layer": 1}, 4]}}
    cfg = parse_config(doc)
    assert cfg.params["eta"] == [9 + 5, 4]


def test_overrides():
    cfg = parse_config(SEP, kind="simulate", overrides={"seed": 9, "workers": 3, "replicas": 7, "out": "x"})
    assert (cfg.run.seed, cfg.run.workers, cfg.run.out, cfg.params["replicas"]) == (9, 3, "x", 7)


def test_digest_ignores_workers_and_output():
    a = parse_config(SEP, kind="simulate", overrides={"workers": 1, "out": "a"})
    b = parse_config(SEP, kind="simulate", overrides={"workers": 4, "out": "b"})
    c = parse_config(SEP, kind="simulate", overrides={"seed": 1})
    assert a.digest == b.digest != c.digest


def test_f_profiles_need_rtp():
    doc = with_experiment(kind="check-duality", f_profiles=[[0.5] * 4])
    with pytest.raises(ConfigError, match="s=0"):
        parse_config(doc)


def test_schema_lists_every_kind():
    assert set(load_schema()["$defs"]["experiment"]["properties"]["kind"]["enum"]) == set(KINDS)


def test_not_an_object():
    with pytest.raises(ConfigError):
        parse_config("[1, 2]")
    with pytest.raises(ConfigError, match="JSON"):
        parse_config("{not json")
