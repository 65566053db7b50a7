import json

import pytest
from pydantic import ValidationError

from pcsracing.config import GameConfig, Settings
from pcsracing.config_utils import load_settings, read_config_file, save_settings


def _write(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def test_missing_file_gives_defaults(tmp_path):
    assert read_config_file(str(tmp_path / "absent.json")) == {}
    settings = load_settings(str(tmp_path / "absent.json"))
    assert settings.game.m == 4
    assert settings.sim.lidar_beams == 108
    assert settings.vehicle.mass == pytest.approx(3.74)


def test_layers_apply_in_order(tmp_path, monkeypatch):
    path = _write(tmp_path / "config.json", {"game": {"m": 3, "n_init": 5}, "seed": 11})
    monkeypatch.setenv("PCS_GAME__M", "2")
    settings = load_settings(path, {"game": {"n_init": 7}})
    assert settings.game.m == 2
    assert settings.game.n_init == 7
    assert settings.seed == 11
    # sections not named anywhere keep their defaults
    assert settings.game.step_duration == pytest.approx(8.0)


def test_invalid_values_are_rejected(tmp_path):
    with pytest.raises(ValidationError):
        Settings(planner={"clothoid_samples": 15})
    with pytest.raises(ValidationError):
        GameConfig(default_action=4)
    with pytest.raises(ValidationError):
        GameConfig(m=0)
    path = _write(tmp_path / "config.json", {"es": {"population": 1}})
    with pytest.raises(ValidationError):
        load_settings(path)


def test_game_config_counts():
    cfg = GameConfig(m=4, n_axes=2)
    assert cfg.decision_count == 3
    assert cfg.action_count == 4
    assert cfg.branch_count == 64
    assert GameConfig(m=1).branch_count == 1


def test_saved_settings_load_back(tmp_path):
    settings = Settings(seed=9, game={"m": 3})
    path = str(tmp_path / "out" / "config.json")
    save_settings(settings, path)
    loaded = load_settings(path)
    assert loaded.model_dump() == settings.model_dump()
