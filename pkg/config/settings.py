"""Configuration management for attested-fhe."""

import copy
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from .defaults import CONFIG_DIRS, CONFIG_FILENAME, DEFAULT_CONFIG, SEED_ENV_VAR
from .presets import FHE_PRESETS, TPM_LATENCY_PRESETS

logger = logging.getLogger(__name__)


class ConfigManager:
    """Manages application configuration with YAML file support."""

    def __init__(self, path: Optional[Path] = None):
        self.config: Dict[str, Any] = copy.deepcopy(DEFAULT_CONFIG)
        self.config_path: Optional[Path] = None
        self._load_config(path)

    def _find_config_file(self) -> Optional[Path]:
        """Find the first existing config file in standard locations."""
        for config_dir in CONFIG_DIRS:
            config_file = config_dir / CONFIG_FILENAME
            if config_file.exists():
                return config_file
        return None

    def _load_config(self, path: Optional[Path] = None):
        """Load configuration from file, falling back to defaults."""
        config_file = Path(path) if path else self._find_config_file()
        self.config_path = config_file or CONFIG_DIRS[0] / CONFIG_FILENAME

        if config_file is not None and config_file.exists():
            try:
                with open(config_file, 'r', encoding='utf-8') as f:
                    user_config = yaml.safe_load(f) or {}

                # Merge user config with defaults
                self._deep_merge(self.config, user_config)

            except (OSError, yaml.YAMLError) as e:
                logger.warning("Could not load config file %s: %s; using defaults", config_file, e)

        seed = os.environ.get(SEED_ENV_VAR)
        if seed is not None:
            try:
                self.config["rng"]["seed"] = int(seed)
            except ValueError:
                logger.warning("Ignoring non-integer %s=%r", SEED_ENV_VAR, seed)

    def load(self, path: Path):
        """Replace the current configuration with defaults merged with `path`."""
        self.config = copy.deepcopy(DEFAULT_CONFIG)
        self._load_config(path)

    def _deep_merge(self, base: Dict, update: Dict):
        """Recursively merge update dict into base dict."""
        for key, value in update.items():
            if key in base and isinstance(base[key], dict) and isinstance(value, dict):
                self._deep_merge(base[key], value)
            else:
                base[key] = value

    def _save_config_to_file(self, file_path: Path, config: Dict):
        """Save configuration to YAML file."""
        file_path.parent.mkdir(parents=True, exist_ok=True)
        with open(file_path, 'w', encoding='utf-8') as f:
            yaml.dump(config, f, default_flow_style=False, indent=2)

    def get(self, key_path: str, default=None):
        """Get config value using dot notation (e.g., 'tpm.latency_us')."""
        keys = key_path.split('.')
        value = self.config

        for key in keys:
            if isinstance(value, dict) and key in value:
                value = value[key]
            else:
                return default

        return value

    def set(self, key_path: str, value: Any):
        """Set config value using dot notation."""
        keys = key_path.split('.')
        config = self.config

        for key in keys[:-1]:
            if key not in config:
                config[key] = {}
            config = config[key]

        config[keys[-1]] = value

    def save(self):
        """Save current configuration to file."""
        if self.config_path:
            self._save_config_to_file(self.config_path, self.config)

    def reset_to_defaults(self):
        """Reset configuration to default values."""
        self.config = copy.deepcopy(DEFAULT_CONFIG)
        self.save()

    def run_config(self) -> "RunConfig":
        """Validated snapshot of the settings a command runs with."""
        return RunConfig.from_manager(self)


@dataclass(frozen=True)
class RunConfig:
    """Validated view of the configuration."""
    preset: str
    tpm_latency_us: int
    realtime: bool
    transport: str
    host: str
    port: int
    workdir: Path
    history_db: Path
    seed: int

    @classmethod
    def from_manager(cls, manager: ConfigManager) -> "RunConfig":
        from core.errors import ConfigError, ParamsError
        from core.fhe import FheParams

        preset = manager.get("fhe.preset", "desk")
        if preset not in FHE_PRESETS:
            raise ConfigError(f"Unknown FHE preset: {preset}")
        try:
            FheParams.from_preset(preset)
        except ParamsError as e:
            raise ConfigError(f"Preset {preset} is invalid: {e}") from e

        latency_preset = manager.get("tpm.latency_preset")
        if latency_preset:
            if latency_preset not in TPM_LATENCY_PRESETS:
                raise ConfigError(f"Unknown TPM latency preset: {latency_preset}")
            latency_us = TPM_LATENCY_PRESETS[latency_preset]
        else:
            latency_us = manager.get("tpm.latency_us", 0)
        if not isinstance(latency_us, int) or latency_us < 0:
            raise ConfigError(f"TPM latency must be a non-negative integer, got {latency_us!r}")

        transport = manager.get("transport.kind", "inproc")
        if transport not in ("inproc", "tcp"):
            raise ConfigError(f"Unknown transport: {transport}")

        try:
            seed = int(manager.get("rng.seed", 0))
            port = int(manager.get("transport.port", 0))
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e

        return cls(
            preset=preset,
            tpm_latency_us=latency_us,
            realtime=bool(manager.get("tpm.realtime", False)),
            transport=transport,
            host=str(manager.get("transport.host", "127.0.0.1")),
            port=port,
            workdir=Path(manager.get("paths.workdir")),
            history_db=Path(manager.get("paths.history_db")),
            seed=seed,
        )


# Global config instance
config = ConfigManager()
