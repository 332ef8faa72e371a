"""key=value config files overriding simulator/tracker/training defaults.

Lines are `section.key = value` (or bare `key = value` for top-level
settings); '#' starts a comment. Values parse as int, float, bool, or str.
"""
from __future__ import annotations

from dataclasses import fields
from pathlib import Path

from .sim import ClothParams, WorkspaceConfig
from .handtrace import TrackerConfig
from .heatmap import HeatmapConfig
from .dataset import AugmentConfig
from .training import TrainConfig
from .oracle import OracleConfig


class ConfigError(Exception):
    pass


def _parse_value(raw: str):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def load_config_file(path) -> dict:
    """Returns {"section.key": value}; bare keys land in section ""."""
    out = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, raw = line.partition("=")
        out[key.strip()] = _parse_value(raw)
    return out


_SECTIONS = {
    "sim": ClothParams,
    "workspace": WorkspaceConfig,
    "tracker": TrackerConfig,
    "heatmap": HeatmapConfig,
    "augment": AugmentConfig,
    "train": TrainConfig,
    "oracle": OracleConfig,
}


def build_section(section: str, overrides: dict, **extra):
    """Instantiate a config dataclass with file overrides applied."""
    cls = _SECTIONS[section]
    valid = {f.name for f in fields(cls)}
    kw = dict(extra)
    for key, value in overrides.items():
        if "." not in key:
            continue
        sec, _, name = key.partition(".")
        if sec != section:
            continue
        if name not in valid:
            raise ConfigError(f"unknown key {key}: {section} has no field {name}")
        kw[name] = value
    return cls(**kw)
