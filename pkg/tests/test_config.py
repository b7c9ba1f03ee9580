import json

import pytest

from autofocus.attention import ConfigError
from autofocus.config import RunConfig, desk, from_mapping, full, load_config


def test_desk_defaults_are_consistent():
    cfg = desk()
    gen = cfg.generator()
    assert gen.n_frames == cfg.n_frames and gen.idle_gap == cfg.idle_gap
    m = cfg.model(vocab_size=10, n_classes=5)
    assert m.focal == (3, 9, 80) and m.max_frames == 80
    assert cfg.training().lr == cfg.lr


def test_full_preset_is_wider():
    assert full().d == 512 and full().lr == 1e-4


@pytest.mark.parametrize("kw", [dict(d=10, heads=4), dict(epochs=-1), dict(lr=0), dict(focal=(9, 3)),
                                dict(split_ratios=(0.5, 0.5)), dict(episodes=0)])
def test_invalid_values(kw):
    with pytest.raises(ConfigError):
        RunConfig(**kw)


def test_generator_errors_become_config_errors():
    with pytest.raises(ConfigError):
        RunConfig(max_gap=5, window=2).generator()


def test_yaml_and_json(tmp_path):
    (tmp_path / "c.yaml").write_text("preset: full\nepochs: 2\nfocal: [2, 4]\n")
    cfg = load_config(tmp_path / "c.yaml")
    assert (cfg.d, cfg.epochs, cfg.focal) == (512, 2, (2, 4))
    (tmp_path / "c.json").write_text(json.dumps(cfg.to_dict()))
    assert load_config(tmp_path / "c.json") == cfg


@pytest.mark.parametrize("data", [{"nope": 1}, {"preset": "huge"}, [1, 2], {"epochs": "many"}])
def test_bad_mappings(data):
    with pytest.raises(ConfigError):
        from_mapping(data)


def test_unreadable_and_unparsable(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")
