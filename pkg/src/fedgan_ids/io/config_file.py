"""Scenario files: JSON documents validated against `SimConfig`."""

from __future__ import annotations

import json
from collections.abc import Sequence
from pathlib import Path

from pydantic import ValidationError

from fedgan_ids.errors import ConfigConflict, ConfigError
from fedgan_ids.models.config import SimConfig


def format_key_path(location: Sequence[int | str]) -> str | None:
    """('clusters', 0, 'C') -> 'clusters[0].C'"""
    path = ""
    for part in location:
        if isinstance(part, int):
            path += f"[{part}]"
        else:
            path += f".{part}" if path else str(part)
    return path or None


def config_from_text(text: str, source: str = "<config>") -> SimConfig:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(
            f"{source} is not valid JSON (line {e.lineno}, column {e.colno}): {e.msg}"
        ) from e
    try:
        return SimConfig.model_validate(document)
    except ValidationError as e:
        first, *rest = e.errors()
        message = first["msg"]
        if rest:
            message += f" (and {len(rest)} more problem{'s' if len(rest) > 1 else ''})"
        location = tuple(first["loc"])
        conflict = first.get("ctx", {}).get("error")
        if isinstance(conflict, ConfigConflict):
            location += conflict.location
        raise ConfigError(message, key_path=format_key_path(location)) from e


def parse_config(path: Path) -> SimConfig:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read {path}: {e.strerror}") from e
    except UnicodeDecodeError as e:
        raise ConfigError(f"{path} is not UTF-8 text: {e.reason}.") from None
    return config_from_text(text, source=str(path))


def dump_config(config: SimConfig) -> str:
    """Render `config` so that parsing the result gives back an equal config."""
    return config.model_dump_json(by_alias=True, indent=2) + "\n"


def write_config(path: Path, config: SimConfig) -> None:
    path.write_text(dump_config(config), encoding="utf-8")
