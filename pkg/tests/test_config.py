import json

import pytest

from src.config import EvolutionConfig, RunConfig, config_hash, load_config
from src.errors import ConfigError


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    """Keeps SHEET_* variables from the developer's shell out of these tests."""
    import os
    for key in list(os.environ):
        if key.startswith("SHEET_") and key != "SHEET_LOG_DIR":
            monkeypatch.delenv(key)


def test_defaults():
    """Defaults match the documented values."""
    config = load_config()
    assert config.grid.d == 3
    assert config.grid.H == 20.0
    assert config.stability.delta0 == 0.1
    assert config.cutoffs.eps1 < config.cutoffs.eps2
    assert config.seed == 1234


def test_json_file_and_overrides(tmp_path):
    """File values apply, keyword overrides win over them."""
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"grid": {"Nh": 24, "H": 15.0}, "seed": 7}))
    config = load_config(str(path), seed=11)
    assert config.grid.Nh == 24
    assert config.grid.H == 15.0
    assert config.seed == 11


def test_environment_override(monkeypatch):
    """SHEET_<SECTION>__<FIELD> reaches nested fields regardless of case."""
    monkeypatch.setenv("SHEET_GRID__NH", "64")
    monkeypatch.setenv("SHEET_SEED", "99")
    config = load_config()
    assert config.grid.Nh == 64
    assert config.seed == 99


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("does/not/exist.json")


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(str(path))


@pytest.mark.parametrize("raw", [{"grid": {"H": 5.0}}, {"grid": {"d": 4}}, {"eps_sweep": []},
                                 {"evolution": {"cfl": 1.5}}])
def test_out_of_range_values(tmp_path, raw):
    """Values outside their documented ranges are rejected at load time."""
    path = tmp_path / "run.json"
    path.write_text(json.dumps(raw))
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_unordered_cutoffs_load():
    """ε1 > ε2 loads so that verify can report it."""
    config = RunConfig(cutoffs={"eps1": 0.2, "eps2": 0.1})
    assert config.cutoffs.eps1 == 0.2


def test_tangential_pairs():
    """Background vectors accept scalars and comma strings and pad to two components."""
    ev = EvolutionConfig(v_plus="0.5", b_minus=[1.0, 2.0])
    assert ev.v_plus == [0.5, 0.0]
    assert ev.b_minus == [1.0, 2.0]
    with pytest.raises(ValueError):
        EvolutionConfig(b_plus=[1.0, 2.0, 3.0])


def test_config_hash_tracks_content():
    a, b = RunConfig(), RunConfig()
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(RunConfig(seed=5))
