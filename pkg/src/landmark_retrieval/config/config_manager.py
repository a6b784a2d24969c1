"""
Configuration manager for landmark retrieval runs.

This module provides:
- Loading of named YAML configurations from the config directory
- Recursive merging of overrides (file < --set flags)
- Validation into a typed ``RunConfig``
- Snapshots of the effective configuration into run directories
"""

import logging
import os
from functools import lru_cache
from pathlib import Path
from typing import Any

import yaml
from dotenv import load_dotenv
from pydantic import ValidationError

from ..exceptions import ConfigError
from .run_config import RunConfig

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "LANDMARK_OUTPUT_ROOT"
LOG_LEVEL_ENV = "LANDMARK_LOG_LEVEL"
DEFAULT_OUTPUT_ROOT = "runs"


class ConfigManager:
    """
    Loads, merges and saves run configurations.

    Named configs live as ``<config_dir>/<name>.yaml``; an explicit file path
    is accepted wherever a name is.
    """

    def __init__(self, config_dir: str | Path | None = None):
        """
        Args:
            config_dir: Directory of named configs (default: ``config/`` at the repository root)
        """
        self.config_dir = (
            Path(config_dir)
            if config_dir
            else Path(__file__).parent.parent.parent.parent / "config"
        )
        self.configs: dict[str, dict[str, Any]] = {}

        if not self.config_dir.exists():
            logger.debug(f"Config directory not found: {self.config_dir}")

    def _resolve(self, config_name: str | Path) -> Path:
        candidate = Path(config_name)
        if candidate.suffix in (".yaml", ".yml") or candidate.exists():
            return candidate
        return self.config_dir / f"{config_name}.yaml"

    def load_config(self, config_name: str | Path) -> dict[str, Any]:
        """
        Load a named config or a YAML file.

        Args:
            config_name: Config name (without extension) or path to a YAML file

        Returns:
            The raw mapping (empty if the file is empty)

        Raises:
            ConfigError: the file is missing or is not a YAML mapping
        """
        config_file = self._resolve(config_name)
        if not config_file.exists():
            raise ConfigError(f"Config file not found: {config_file}")

        try:
            with open(config_file, encoding="utf-8") as f:
                config = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Could not parse {config_file}: {e}") from e

        if not isinstance(config, dict):
            raise ConfigError(f"{config_file} must contain a mapping at top level")

        self.configs[str(config_name)] = config
        logger.info(f"Config loaded: {config_file}")
        return config

    def get_config(self, config_name: str | Path) -> dict[str, Any]:
        """Cached variant of ``load_config``."""
        key = str(config_name)
        if key not in self.configs:
            return self.load_config(config_name)
        return self.configs[key]

    def save_config(self, path: str | Path, config: dict[str, Any] | RunConfig) -> Path:
        """
        Write a configuration snapshot.

        Args:
            path: Target file
            config: Raw mapping or a validated ``RunConfig``

        Returns:
            The written path
        """
        if isinstance(config, RunConfig):
            config = config_to_dict(config)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            yaml.safe_dump(config, f, default_flow_style=False, sort_keys=False, indent=2)
        logger.info(f"Config saved: {path}")
        return path

    def _deep_update(self, base: dict[str, Any], updates: dict[str, Any]) -> dict[str, Any]:
        """
        Recursively merge ``updates`` into a copy of ``base``.

        Args:
            base: Base mapping
            updates: Values that win

        Returns:
            Merged mapping
        """
        result = base.copy()

        for key, value in updates.items():
            if key in result and isinstance(result[key], dict) and isinstance(value, dict):
                result[key] = self._deep_update(result[key], value)
            else:
                result[key] = value

        return result

    def build_run_config(
        self,
        config_name: str | Path | None = None,
        overrides: list[str] | None = None,
        extra: dict[str, Any] | None = None,
    ) -> RunConfig:
        """
        Defaults < config file < ``--set`` overrides < explicit flags.

        Args:
            config_name: Optional config name or YAML path
            overrides: ``section.key=value`` strings
            extra: Already-structured values from dedicated CLI flags

        Returns:
            Validated ``RunConfig``

        Raises:
            ConfigError: unknown keys, invalid values or malformed overrides
        """
        raw: dict[str, Any] = {}
        if config_name is not None:
            raw = self._deep_update(raw, self.get_config(config_name))
        if overrides:
            raw = self._deep_update(raw, parse_overrides(overrides))
        if extra:
            raw = self._deep_update(raw, {k: v for k, v in extra.items() if v is not None})

        try:
            return RunConfig.model_validate(raw)
        except ValidationError as e:
            raise ConfigError(_format_validation_error(e)) from e

    def list_configs(self) -> list[str]:
        """Names of the configs available in the config directory."""
        return sorted(p.stem for p in self.config_dir.glob("*.yaml"))


def parse_overrides(overrides: list[str]) -> dict[str, Any]:
    """
    Turn ``["train.tau=0.1", "seed=3"]`` into a nested mapping.

    Values are parsed as YAML scalars, so ``.inf``, ``true`` and ``[1, 2]``
    work as expected.
    """
    result: dict[str, Any] = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"Override must look like key=value: {item!r}")
        dotted, raw_value = item.split("=", 1)
        keys = [k for k in dotted.strip().split(".") if k]
        if not keys:
            raise ConfigError(f"Override has an empty key: {item!r}")
        try:
            value = yaml.safe_load(raw_value) if raw_value.strip() else None
        except yaml.YAMLError as e:
            raise ConfigError(f"Could not parse override value {raw_value!r}: {e}") from e

        current = result
        for key in keys[:-1]:
            current = current.setdefault(key, {})
            if not isinstance(current, dict):
                raise ConfigError(f"Override {item!r} conflicts with a scalar override")
        current[keys[-1]] = value
    return result


def config_to_dict(config: RunConfig) -> dict[str, Any]:
    """Plain-YAML-safe mapping of a ``RunConfig`` (tuples become lists)."""

    def _plain(value):
        if isinstance(value, dict):
            return {k: _plain(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [_plain(v) for v in value]
        return value

    return _plain(config.model_dump())


def _format_validation_error(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(p) for p in item["loc"]) or "<root>"
        parts.append(f"{location}: {item['msg']}")
    return "Invalid configuration: " + "; ".join(parts)


def get_output_root() -> Path:
    """Default output root, from ``LANDMARK_OUTPUT_ROOT`` (``.env`` honoured)."""
    load_dotenv()
    return Path(os.getenv(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT))


def get_default_log_level() -> str:
    load_dotenv()
    return os.getenv(LOG_LEVEL_ENV, "INFO").upper()


@lru_cache
def get_config_manager() -> ConfigManager:
    """Process-wide ``ConfigManager`` over the repository's config directory."""
    return ConfigManager()
