import numpy as np
import pytest

from ginoq.config import ConfigError, emit_config, parse_config
from ginoq.experiments import shipped_config, shipped_configs


def test_all_shipped_configs_parse():
    names = {p.stem for p in shipped_configs()}
    assert {"nonindexable_10_7", "nonindexable_100_70"} <= names
    assert sum(n.startswith("aoi_") for n in names) == 3
    assert sum(n.startswith("patrol_") for n in names) == 3


def test_one_based_labels_translated():
    cfg = parse_config(shipped_config("nonindexable_10_7").read_text())
    arm = cfg.instance.classes[0].model
    assert arm.labels == (1, 2, 3, 4, 5, 6)
    assert arm.reward[0, 1] == -10.0  # (state 1, active)


def test_round_trip_is_exact():
    cfg = parse_config(shipped_config("nonindexable_10_7").read_text())
    again = parse_config(emit_config(cfg.instance, index_base=1))
    for a, b in zip(cfg.instance.models, again.instance.models):
        assert a.same_as(b)
    assert again.instance.budget == cfg.instance.budget


def test_round_trip_generated_classes():
    cfg = parse_config(shipped_config("aoi_10_3").read_text())
    again = parse_config(emit_config(cfg.instance, index_base=1))
    assert all(a.same_as(b) for a, b in zip(cfg.instance.models, again.instance.models))


def test_unknown_key_rejected_with_line():
    text = shipped_config("patrol_10_4").read_text().replace("penalty = 1.0", "penalty = 1.0\nbogus = 3")
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "x.toml")
    assert "bogus" in str(exc.value)
    assert exc.value.line == text.splitlines().index("bogus = 3") + 1


def test_malformed_toml_has_line():
    with pytest.raises(ConfigError) as exc:
        parse_config("[instance]\nbudget = = 3\n", "bad.toml")
    assert exc.value.line == 2
    assert "bad.toml:2" in str(exc.value)


def test_bad_rows_rejected():
    text = """
[instance]
budget = 1
[[class]]
name = "a"
count = 2
states = 2
passive = [[0.5, 0.6], [0.5, 0.5]]
active = [[1.0, 0.0], [0.0, 1.0]]
"""
    with pytest.raises(ConfigError, match="sums to 1.1"):
        parse_config(text)


def test_initial_state():
    cfg = parse_config(shipped_config("aoi_10_3").read_text())
    assert all(p[0] == 1.0 and p.sum() == 1.0 for p in cfg.initial)
    text = shipped_config("aoi_10_3").read_text().replace("initial_state = 1 ", "initial_state = 99 ")
    with pytest.raises(ConfigError, match="initial_state"):
        parse_config(text)


def test_hash_tracks_text():
    t = shipped_config("patrol_10_4").read_text()
    assert parse_config(t).config_hash == parse_config(t).config_hash
    assert parse_config(t).config_hash != parse_config(t + "\n# note\n").config_hash
