import json
from pathlib import Path

import pytest

from framescope.config import AppConfig, ConfigError, load_app_config


def test_defaults_without_sources():
    cfg = load_app_config(None, env={})
    assert cfg.cache_dir == Path(".framescope-cache")
    assert cfg.default_seeds == (1, 2, 3)
    assert cfg.log_level == "INFO"


def test_config_file_overrides_defaults(tmp_path):
    path = tmp_path / "app.json"
    path.write_text(
        json.dumps(
            {
                "data_root": "/data",
                "cache_dir": "/tmp/cache",
                "default_seeds": [7, 8],
                "log_level": "DEBUG",
                "backend_profiles": {
                    "mock": {"kind": "mock_oracle", "model_name": "m", "oracle": {"mode": "always_gold"}}
                },
            }
        ),
        encoding="utf-8",
    )
    cfg = load_app_config(path, env={})
    assert cfg.data_root == Path("/data")
    assert cfg.default_seeds == (7, 8)
    assert cfg.profile("mock").kind == "mock_oracle"
    with pytest.raises(ConfigError, match="no backend profile"):
        cfg.profile("nope")


def test_environment_overrides_file(tmp_path):
    path = tmp_path / "app.json"
    path.write_text(json.dumps({"cache_dir": "/from/file", "default_seeds": [1]}), encoding="utf-8")
    env = {"FRAMESCOPE_CACHE_DIR": "/from/env", "FRAMESCOPE_SEEDS": "4,5,6"}
    cfg = load_app_config(path, env=env)
    assert cfg.cache_dir == Path("/from/env")
    assert cfg.default_seeds == (4, 5, 6)


def test_flags_override_environment(tmp_path):
    env = {"FRAMESCOPE_LOG_LEVEL": "WARNING", "FRAMESCOPE_CACHE_DIR": "/from/env"}
    cfg = load_app_config(None, env=env, overrides={"log_level": "ERROR", "cache_dir": "/from/flag"})
    assert cfg.log_level == "ERROR"
    assert cfg.cache_dir == Path("/from/flag")


def test_bad_seed_string_is_config_error():
    with pytest.raises(ConfigError, match="bad seeds"):
        load_app_config(None, env={"FRAMESCOPE_SEEDS": "one,two"})
