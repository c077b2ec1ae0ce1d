# si_lab/config.py
import copy
import json
import logging
import os
from typing import Any, Dict, Optional

from .errors import ConfigError

logger = logging.getLogger(__name__)

SEED_ENV = "SI_LAB_SEED"

DEFAULT_SETTINGS_PATH = os.path.join(os.path.dirname(os.path.dirname(__file__)), 'config', 'settings.json')


def default_settings() -> Dict[str, Any]:
    """Built-in defaults, used when the settings file is missing or unreadable"""
    return {
        "workload": {
            "txn_num": 3000,
            "concurrency": 9,
            "max_txn_len": 12,
            "key_count": 10,
            "max_writes_per_key": 128,
            "key_dist": "exponential"
        },
        "deployment": {
            "replica_count": 3,
            "shard_count": 2,
            "mongos_count": 2,
            "replication_mode": "eager",
            "clock_skew_ns": 200000
        },
        "simulation": {
            "network_delay_ns": [20000, 120000],
            "service_time_ns": [5000, 40000],
            "think_time_ns": [0, 200000],
            "replication_delay_ns": [20000, 400000],
            "commit_gap_ns": [1000, 30000]
        },
        "checker": {
            "oracle_cap": 6,
            "rt_tolerance_ms": 0
        },
        "logging": {
            "level": "WARNING"
        }
    }


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_settings(settings_file: Optional[str] = None) -> Dict[str, Any]:
    """
    Load settings from JSON file, deep-merged over the defaults

    Args:
        settings_file: Path to settings JSON file (optional)

    Returns:
        Dictionary of settings
    """
    explicit = settings_file is not None
    if settings_file is None:
        settings_file = DEFAULT_SETTINGS_PATH

    if not os.path.exists(settings_file):
        if explicit:
            raise ConfigError(f"settings file not found: {settings_file}")
        logger.info("settings file not found, writing defaults to %s", settings_file)
        settings = default_settings()
        try:
            os.makedirs(os.path.dirname(settings_file), exist_ok=True)
            with open(settings_file, 'w', encoding='utf-8') as f:
                json.dump(settings, f, indent=2)
        except OSError as e:
            logger.warning("could not write default settings: %s", e)
        return settings

    try:
        with open(settings_file, 'r', encoding='utf-8') as f:
            loaded = json.load(f)
    except (OSError, ValueError) as e:
        if explicit:
            raise ConfigError(f"cannot read settings file {settings_file}: {e}") from e
        logger.error("error loading settings, using defaults: %s", e)
        return default_settings()

    if not isinstance(loaded, dict):
        raise ConfigError(f"settings file {settings_file} must hold a JSON object")
    return _merge(default_settings(), loaded)


def resolve_seed(seed: Optional[int]) -> int:
    """Explicit seed, else the SI_LAB_SEED environment variable, else 0"""
    if seed is not None:
        return seed
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return 0
    try:
        return int(raw)
    except ValueError as e:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from e
