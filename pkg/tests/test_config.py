import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hemiparam.config import (
    ConfigError,
    RunConfig,
    dump_config,
    from_mapping,
    load_config,
    parse_config,
    save_config,
    validate,
)

configs = st.builds(
    RunConfig,
    input=st.text("abc_/.", min_size=1, max_size=12),
    method=st.sampled_from(["tutte", "conformal", "area"]),
    c=st.none() | st.floats(0.05, 5.0),
    eps_eta=st.floats(1e-4, 1.0),
    n_max=st.integers(0, 200),
    samples=st.integers(0, 10**6),
    output=st.text("xyz-", min_size=1, max_size=8),
    seed=st.integers(0, 2**31),
    weld=st.booleans(),
    jobs=st.integers(1, 64),
)


@settings(max_examples=100)
@given(configs)
def test_toml_round_trip_is_lossless(tmp_path_factory, cfg):
    path = tmp_path_factory.mktemp("cfg") / "c.toml"
    save_config(cfg, path)
    assert load_config(path) == cfg


def test_defaults():
    cfg = RunConfig()
    assert cfg.method == "area" and cfg.eps_eta == math.pi / 160 and cfg.n_max == 20


def test_flag_overrides_file(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('input = "m.obj"\nn_max = 50\n')
    assert parse_config(path, {"n_max": 75}).n_max == 75
    assert parse_config(path, {"n_max": None}).n_max == 50


def test_unknown_key(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('input = "m.obj"\nnmax = 5\n')
    with pytest.raises(ConfigError, match="nmax"):
        load_config(path)


def test_malformed_file(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("input = \n")
    with pytest.raises(ConfigError, match="malformed"):
        load_config(path)


def test_type_errors():
    with pytest.raises(ConfigError):
        from_mapping({"n_max": 2.5})
    with pytest.raises(ConfigError):
        from_mapping({"weld": 1})
    assert from_mapping({"c": 1}).c == 1.0


def test_missing_input_named():
    with pytest.raises(ConfigError, match="input"):
        validate(RunConfig())


def test_invalid_method_lists_methods():
    with pytest.raises(ConfigError, match="tutte, conformal, area, balanced"):
        validate(RunConfig(input="x.obj", method="spectral"))


def test_balanced_completion():
    cfg = validate(RunConfig(input="x.obj", method="balanced", alpha=0.25, gamma=0.25))
    assert cfg.beta == pytest.approx(0.5)
    with pytest.raises(ConfigError):
        validate(RunConfig(input="x.obj", method="balanced", alpha=0.25))
    with pytest.raises(ConfigError):
        validate(RunConfig(input="x.obj", method="balanced", alpha=0.8, beta=0.8))
    with pytest.raises(ConfigError):
        validate(RunConfig(input="x.obj", method="area", alpha=0.8))


@pytest.mark.parametrize(
    "field,value", [("c", -1.0), ("eps_eta", 0.0), ("n_max", -1), ("samples", 2), ("jobs", 0), ("c_min", 3.0)]
)
def test_range_checks(field, value):
    with pytest.raises(ConfigError):
        validate(from_mapping({"input": "x.obj", field: value}))


def test_dump_omits_unset():
    assert "alpha" not in dump_config(RunConfig(input="x.obj"))
