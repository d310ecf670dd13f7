"""Plain-text key-value run configuration.

Files use INI syntax: one ``[section]`` per settings group, ``key = value``
lines inside. Each section maps onto a dataclass; values are converted to
the type of the field's default (comma-separated numbers for pairs,
``none`` for an unset optional number). Unknown keys are errors so typos
cannot silently fall back to defaults.
"""

from __future__ import annotations

import configparser
import dataclasses
from pathlib import Path


class ConfigError(ValueError):
    pass


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def read_config(path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as handle:
            parser.read_file(handle)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return {name: dict(parser[name]) for name in parser.sections()}


def _convert(text: str, default, key: str, optional: bool = False):
    text = text.strip()
    if optional and text.lower() == "none":
        return None
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in _TRUE | _FALSE:
                raise ValueError(text)
            return low in _TRUE
        if isinstance(default, tuple):
            parts = [p.strip() for p in text.split(",")]
            return tuple(type(d)(p) for d, p in zip(default, parts, strict=True))
        if default is None:
            return None if text.lower() == "none" else float(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{key} = {text!r} is not a valid {type(default).__name__}") from None


def apply_section(instance, section: dict[str, str], name: str = ""):
    """Copy of dataclass ``instance`` with the keys of ``section`` applied."""
    fields = {f.name: f for f in dataclasses.fields(instance)}
    changes = {}
    for key, text in section.items():
        if key not in fields:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        optional = "None" in str(fields[key].type)
        changes[key] = _convert(text, getattr(instance, key), f"[{name}] {key}", optional)
    try:
        return dataclasses.replace(instance, **changes)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{name}] {exc}") from None


def _render(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if value is None:
        return "none"
    return str(value)


def write_config(path, sections: dict[str, object]) -> None:
    """Write dataclasses (or plain dicts) as INI sections with keys in field order."""
    lines = []
    for name, obj in sections.items():
        items = dataclasses.asdict(obj) if dataclasses.is_dataclass(obj) else dict(obj)
        lines.append(f"[{name}]")
        lines += [f"{k} = {_render(v)}" for k, v in items.items() if not isinstance(v, dict)]
        lines.append("")
    Path(path).write_text("\n".join(lines))
