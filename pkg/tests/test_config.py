from fractions import Fraction
from importlib import resources

import pytest

from lorafl.config import ConfigError, ScenarioConfig, dump_config, from_dict, load_config, save_config


def test_defaults_round_trip_through_yaml(tmp_path):
    cfg = ScenarioConfig()
    save_config(cfg, tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml") == cfg


def test_bundled_default_scenario_loads():
    path = resources.files("lorafl") / "scenarios" / "default.yaml"
    cfg = load_config(path)
    assert cfg.schedule.fec_rate == Fraction(1, 2)
    assert cfg.schedule.sf == 9
    assert cfg.train.layers == (784, 32, 10)


def test_fractional_rates_parse():
    cfg = from_dict({"schedule": {"fec_rate": "2/3"}})
    assert cfg.schedule.fec_rate == Fraction(2, 3)
    assert from_dict({"schedule": {"fec_rate": 0.5}}).schedule.fec_rate == Fraction(1, 2)


def test_unknown_field_reports_path():
    with pytest.raises(ConfigError, match="schedule.bogus"):
        from_dict({"schedule": {"bogus": 1}})


def test_type_errors_report_path():
    with pytest.raises(ConfigError, match="radio.tx_power"):
        from_dict({"radio": {"tx_power": "loud"}})
    with pytest.raises(ConfigError, match="schedule"):
        from_dict({"schedule": {"sf": 13}})


def test_clients_per_round_bounded_by_channels():
    with pytest.raises(ConfigError, match="channel_count"):
        from_dict({"schedule": {"clients_per_round": 9}})


def test_layers_must_match_data():
    with pytest.raises(ConfigError, match="input width"):
        from_dict({"train": {"layers": [64, 32, 10]}})
    ok = from_dict({"data": {"kind": "blobs", "n_features": 64}, "train": {"layers": [64, 32, 10]}})
    assert ok.data.input_dim == 64


def test_replace_with_dotted_paths():
    cfg = ScenarioConfig().replace(**{"schedule.sf": 12, "interference.intensity": 1e-4})
    assert cfg.schedule.sf == 12
    assert cfg.interference.intensity == 1e-4
    assert ScenarioConfig().schedule.sf == 9


def test_bad_yaml(tmp_path):
    (tmp_path / "x.yaml").write_text("schedule: [1, 2")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "x.yaml")
    (tmp_path / "y.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "y.yaml")


def test_dump_is_plain_yaml():
    text = dump_config(ScenarioConfig())
    assert "fec_rate: 1/2" in text
    assert "!!python" not in text
