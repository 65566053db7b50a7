# pcsracing/config_utils.py
import json
import os
from typing import Any, Dict, Optional
import logging

from dotenv import load_dotenv

from .config import Settings

CONFIG_DIR = os.getenv("PCS_CONFIG_DIR", "config")
DEFAULT_CONFIG_PATH = os.path.join(CONFIG_DIR, "pcs_config.json")
logger = logging.getLogger(__name__)


def read_config_file(path: str) -> Dict[str, Any]:
    """Reads the raw JSON config; an absent file yields an empty dict."""
    if not os.path.exists(path):
        logger.warning(f"Config file not found at {path}, using defaults.")
        return {}
    with open(path, 'r') as f:
        return json.load(f)


def load_settings(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> Settings:
    """
    Builds the Settings object: defaults, then the JSON file, then environment
    variables, then explicit overrides (CLI flags).
    """
    load_dotenv()
    path = path or os.getenv("PCS_CONFIG_PATH", DEFAULT_CONFIG_PATH)
    data = read_config_file(path)
    # Environment values win over the file; pydantic-settings gives init kwargs
    # priority, so the env layer is merged in by hand.
    env_layer = Settings().model_dump(exclude_unset=True)
    merged = _deep_merge(data, env_layer)
    if overrides:
        merged = _deep_merge(merged, overrides)
    loaded = Settings(**merged)
    logger.info(f"Loaded settings from {path}")
    return loaded


def save_settings(config_data: Settings, path: str = DEFAULT_CONFIG_PATH) -> None:
    """Saves the configuration to a JSON file."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, 'w') as f:
        json.dump(config_data.model_dump(mode="json"), f, indent=2)
    logger.info(f"Successfully saved configuration to {path}")


def _deep_merge(base: Dict[str, Any], extra: Dict[str, Any]) -> Dict[str, Any]:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out
