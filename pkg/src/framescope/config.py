"""Layered application configuration: defaults < config file < environment < flags."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .backends import BackendConfig

ENV_PREFIX = "FRAMESCOPE_"


class ConfigError(Exception):
    pass


@dataclass
class AppConfig:
    data_root: Path = Path(".")
    cache_dir: Path = Path(".framescope-cache")
    backend_profiles: dict[str, BackendConfig] = field(default_factory=dict)
    default_seeds: tuple[int, ...] = (1, 2, 3)
    log_level: str = "INFO"

    def profile(self, name: str) -> BackendConfig:
        if name not in self.backend_profiles:
            raise ConfigError(f"no backend profile named {name!r}; have {sorted(self.backend_profiles)}")
        return self.backend_profiles[name]


def _parse_seeds(raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"bad seeds value {raw!r}: {exc}") from exc


def load_app_config(
    config_path: Path | None = None,
    env: dict | None = None,
    overrides: dict | None = None,
) -> AppConfig:
    """Resolve the app config with the documented precedence order."""
    env = os.environ if env is None else env
    cfg = AppConfig()

    if config_path is not None:
        data = json.loads(Path(config_path).read_text(encoding="utf-8"))
        if "data_root" in data:
            cfg.data_root = Path(data["data_root"])
        if "cache_dir" in data:
            cfg.cache_dir = Path(data["cache_dir"])
        if "default_seeds" in data:
            cfg.default_seeds = tuple(int(s) for s in data["default_seeds"])
        if "log_level" in data:
            cfg.log_level = str(data["log_level"])
        profiles = data.get("backend_profiles", {})
        if not isinstance(profiles, dict):
            raise ConfigError("backend_profiles must be a mapping of name -> backend config")
        seen: dict[str, BackendConfig] = {}
        for name, profile in profiles.items():
            if name in seen:
                raise ConfigError(f"duplicate backend profile {name!r}")
            seen[name] = BackendConfig.from_dict(profile)
        cfg.backend_profiles = seen

    if env.get(ENV_PREFIX + "DATA_ROOT"):
        cfg.data_root = Path(env[ENV_PREFIX + "DATA_ROOT"])
    if env.get(ENV_PREFIX + "CACHE_DIR"):
        cfg.cache_dir = Path(env[ENV_PREFIX + "CACHE_DIR"])
    if env.get(ENV_PREFIX + "SEEDS"):
        cfg.default_seeds = _parse_seeds(env[ENV_PREFIX + "SEEDS"])
    if env.get(ENV_PREFIX + "LOG_LEVEL"):
        cfg.log_level = env[ENV_PREFIX + "LOG_LEVEL"]

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "data_root":
            cfg.data_root = Path(value)
        elif key == "cache_dir":
            cfg.cache_dir = Path(value)
        elif key == "seeds":
            cfg.default_seeds = _parse_seeds(value) if isinstance(value, str) else tuple(value)
        elif key == "log_level":
            cfg.log_level = str(value)
    return cfg
