import json

import pytest

from switchcert.config import SCHEMA, ConfigError, bundled_config, load_config, parse_config


@pytest.mark.parametrize("name", ["sec4", "ex31", "ex32", "ex33"])
def test_roundtrip(name):
    c = bundled_config(name)
    again = parse_config(c.dumps())
    assert again == c
    assert again.dumps() == c.dumps()
    assert again.build_model() == c.build_model()
    assert again.build_budget() == c.build_budget()


def test_schema_field():
    d = bundled_config("ex31").to_dict()
    assert d["schema"] == SCHEMA
    d["schema"] = "switchcert/0"
    with pytest.raises(ConfigError, match="schema"):
        parse_config(json.dumps(d))


def test_unknown_field():
    d = bundled_config("ex31").to_dict()
    d["model"]["subsystems"][0]["colour"] = "red"
    with pytest.raises(ConfigError, match=r"model\.subsystems\.0\.colour"):
        parse_config(json.dumps(d))


def test_json_syntax_line():
    with pytest.raises(ConfigError, match=r"x\.json:2:"):
        parse_config('{\n  "schema": ,\n}', "x.json")


def test_bad_edge_key():
    d = bundled_config("ex31").to_dict()
    d["budget"]["rho_plus"] = {"1-2": 0.1}
    with pytest.raises(ConfigError):
        parse_config(json.dumps(d))


def test_budget_partition_mismatch():
    d = bundled_config("ex31").to_dict()
    d["budget"]["rho_S"] = {"2": 0.1}
    with pytest.raises(ConfigError):
        parse_config(json.dumps(d))


def test_ex33_lambdas():
    m = bundled_config("ex33").build_model()
    assert [m.lam(p) for p in range(6, 11)] == [-0.75] * 5
    assert len(m.P) == 10


def test_load_and_builders(tmp_path):
    c = bundled_config("sec4")
    p = tmp_path / "c.json"
    p.write_text(c.dumps())
    c2 = load_config(p)
    assert c2.build_policy().initial == 1
    fam, L = c2.build_family(), c2.build_lyapunov()
    assert fam.ids == (1, 2, 3, 4) and L.weights[1] == (1.0, 1.25)


def test_no_simulation_block():
    with pytest.raises(ConfigError):
        bundled_config("ex31").build_family()
