"""
File that contains the reader and writer of the line-oriented config format::

    # comment
    [section]
    key = value

Values are typed by the matching :class:`RunConfig` field: integers, floats, ``true``/``false``,
comma-separated lists, ``none`` for optional values and raw text for strings.
"""
import dataclasses
import logging
import typing
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

import numpy as np

from config.run_config import RunConfig
from core.errors import ConfigError

logger = logging.getLogger(__name__)

_TRUE = ("true", "yes", "on", "1")
_FALSE = ("false", "no", "off", "0")


def _section_type(attribute: str) -> type:
    return typing.get_type_hints(RunConfig)[attribute]


def _field_hints(attribute: str) -> dict[str, object]:
    return typing.get_type_hints(_section_type(attribute))


def _coerce(text: str, hint, key: str, line: Optional[int] = None):
    origin, args = typing.get_origin(hint), typing.get_args(hint)
    try:
        if origin is Union:
            inner = next(a for a in args if a is not type(None))
            return None if text.lower() == "none" else _coerce(text, inner, key, line)
        if origin is tuple:
            parts = [p.strip() for p in text.split(",") if p.strip()]
            return tuple(_coerce(p, args[0], key, line) for p in parts)
        if hint is bool:
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(f"expected true or false, got {text!r}")
        if hint is int:
            return int(text)
        if hint is float:
            value = float(text)
            if not np.isfinite(value):
                raise ValueError(f"expected a finite number, got {text!r}")
            return value
        return text
    except ValueError as e:
        raise ConfigError(str(e), key, line) from e


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _build(values: Mapping[str, Mapping[str, object]], lines: Mapping[str, int]) -> RunConfig:
    default = RunConfig()
    sections = {attribute: dataclasses.replace(getattr(default, attribute), **values.get(attribute, {}))
                for attribute in RunConfig.section_names().values()}
    config = RunConfig(**sections)
    try:
        config.validate()
    except ConfigError as e:
        if e.line is None and e.key in lines:
            raise ConfigError(e.message, e.key, lines[e.key]) from e
        raise
    return config


def parse_config(text: str) -> RunConfig:
    """
    Parse config text; keys left out keep their defaults.

    :raises ConfigError: on unknown sections or keys, duplicate keys, malformed lines or values,
        and failed validation; the message carries the line number.
    """
    headers = RunConfig.section_names()
    values: dict[str, dict[str, object]] = {}
    lines: dict[str, int] = {}
    section = None

    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            header = stripped[1:-1].strip()
            if header not in headers:
                raise ConfigError(f"unknown section [{header}]", line=number)
            section = header
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value', got {stripped!r}", line=number)
        if section is None:
            raise ConfigError("key outside of a [section]", line=number)
        key, value = (part.strip() for part in stripped.split("=", 1))
        dotted = f"{section}.{key}"
        hints = _field_hints(headers[section])
        if key not in hints:
            raise ConfigError("unknown key", dotted, number)
        if dotted in lines:
            raise ConfigError(f"duplicate key, first set on line {lines[dotted]}", dotted, number)
        values.setdefault(headers[section], {})[key] = _coerce(value, hints[key], dotted, number)
        lines[dotted] = number

    return _build(values, lines)


def load_config(path: Union[str, Path]) -> RunConfig:
    """Read and validate a config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e.strerror}") from e
    logger.debug(f"Loading config from {path}")
    try:
        return parse_config(text)
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}") from e


def dump_config(config: RunConfig) -> str:
    """Serialize every key of ``config``; :func:`parse_config` gives back an equal config."""
    out = []
    for header, attribute in RunConfig.section_names().items():
        out.append(f"[{header}]")
        section = getattr(config, attribute)
        for f in dataclasses.fields(section):
            out.append(f"{f.name} = {_format(getattr(section, f.name))}")
        out.append("")
    return "\n".join(out)


def apply_overrides(config: RunConfig, overrides: Mapping[str, str]) -> RunConfig:
    """
    Replace keys given as ``{"section.key": "text"}``, e.g. ``{"langevin.steps": "50"}``.

    :raises ConfigError: for unknown keys, malformed values or a config that no longer validates.
    """
    headers = RunConfig.section_names()
    values: dict[str, dict[str, object]] = {}
    for dotted, text in overrides.items():
        header, _, key = dotted.rpartition(".")
        if header not in headers:
            raise ConfigError("unknown section in override", dotted)
        hints = _field_hints(headers[header])
        if key not in hints:
            raise ConfigError("unknown key in override", dotted)
        values.setdefault(headers[header], {})[key] = _coerce(str(text), hints[key], dotted)

    sections = {attribute: dataclasses.replace(getattr(config, attribute), **values.get(attribute, {}))
                for attribute in headers.values()}
    updated = RunConfig(**sections)
    updated.validate()
    return updated


def parse_override_args(args: Iterable[str]) -> dict[str, str]:
    """
    Collect ``--section.key value`` and ``--section.key=value`` pairs from extra command-line arguments.
    """
    args = list(args)
    overrides: dict[str, str] = {}
    i = 0
    while i < len(args):
        arg = args[i]
        if not arg.startswith("--") or "." not in arg:
            raise ConfigError(f"unexpected argument {arg!r}, overrides look like --section.key value")
        name = arg[2:]
        if "=" in name:
            name, value = name.split("=", 1)
            i += 1
        elif i + 1 < len(args):
            value = args[i + 1]
            i += 2
        else:
            raise ConfigError("missing value", name)
        overrides[name] = value
    return overrides
