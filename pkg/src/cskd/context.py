"""Helpers shared by the configuration dataclasses.

Every configurable component in cskd is a ``@dataclass(kw_only=True)`` whose
fields carry a ``description`` in their metadata. This module maps those
dataclasses to and from JSON-compatible trees, applies dotted CLI overrides,
and fills untouched defaults from environment variables.
"""

from __future__ import annotations

import dataclasses
import json
import os
import types
import typing
from typing import Any, Dict, Mapping, Sequence, Type, TypeVar

from src.cskd.errors import ConfigurationError

T = TypeVar("T")


def env_fallback(obj: Any) -> None:
    """Fetch env vars for attributes that were not passed as args.

    Only fields that declare ``metadata["env"]`` take part; a field still equal
    to its default is replaced by the variable's value when it is set.
    """
    for f in dataclasses.fields(obj):
        name = f.metadata.get("env")
        if not name or not f.init:
            continue
        if getattr(obj, f.name) == f.default and name in os.environ:
            setattr(obj, f.name, _coerce(type(f.default), os.environ[name], f.name))


def _unwrap_optional(tp: Any) -> tuple[Any, bool]:
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) == 1:
            return args[0], True
    return tp, False


def _coerce(tp: Any, value: Any, path: str) -> Any:
    tp, optional = _unwrap_optional(tp)
    if value is None:
        if optional:
            return None
        raise ConfigurationError(f"'{path}' must not be null")
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, Mapping):
            raise ConfigurationError(f"'{path}' must be an object, got {value!r}")
        return from_tree(tp, value, _prefix=path + ".")
    origin = typing.get_origin(tp)
    if origin in (tuple, list):
        if isinstance(value, str):
            value = [v for v in value.split(",") if v]
        if not isinstance(value, (list, tuple)):
            raise ConfigurationError(f"'{path}' must be a list, got {value!r}")
        args = typing.get_args(tp)
        item_tp = args[0] if args else Any
        items = [_coerce(item_tp, v, f"{path}[{i}]") if item_tp is not Any else v for i, v in enumerate(value)]
        return tuple(items) if origin is tuple else items
    if tp is bool:
        if isinstance(value, str):
            lowered = value.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
        if isinstance(value, bool):
            return value
        raise ConfigurationError(f"'{path}' must be a boolean, got {value!r}")
    if tp is int:
        if isinstance(value, bool):
            raise ConfigurationError(f"'{path}' must be an integer, got {value!r}")
        try:
            as_float = float(value)
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"'{path}' must be an integer, got {value!r}") from e
        if not as_float.is_integer():
            raise ConfigurationError(f"'{path}' must be an integer, got {value!r}")
        return int(as_float)
    if tp is float:
        try:
            return float(value)
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"'{path}' must be a number, got {value!r}") from e
    if tp is str:
        return str(value)
    return value


def from_tree(cls: Type[T], tree: Mapping[str, Any], _prefix: str = "") -> T:
    """Build the dataclass ``cls`` from a nested mapping.

    Args:
        cls: A dataclass type, possibly with dataclass-typed fields.
        tree: JSON-compatible mapping; missing keys keep their defaults.

    Returns:
        An instance of ``cls``.

    Raises:
        ConfigurationError: On unknown keys or values of the wrong kind.
    """
    hints = typing.get_type_hints(cls)
    known = {f.name: f for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(tree) - set(known))
    if unknown:
        raise ConfigurationError(
            f"unknown config key(s) {', '.join(_prefix + k for k in unknown)}; "
            f"valid keys: {', '.join(_prefix + k for k in sorted(known))}"
        )
    kwargs = {name: _coerce(hints[name], value, _prefix + name) for name, value in tree.items()}
    return cls(**kwargs)


def to_tree(obj: Any) -> Dict[str, Any]:
    """Inverse of :func:`from_tree`; tuples become lists."""
    return json.loads(json.dumps(dataclasses.asdict(obj)))


def parse_override(text: str) -> tuple[list[str], Any]:
    """Split ``a.b.c=value`` into its key path and a JSON-decoded value.

    Values that are not valid JSON are kept as plain strings.
    """
    if "=" not in text:
        raise ConfigurationError(f"override '{text}' is not of the form key.path=value")
    key, raw = text.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ConfigurationError(f"override '{text}' has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def set_path(tree: Dict[str, Any], path: Sequence[str], value: Any) -> None:
    """Assign ``value`` at the dotted ``path`` of ``tree``, creating objects on the way."""
    node = tree
    for key in path[:-1]:
        child = node.get(key)
        if child is None:
            child = node[key] = {}
        if not isinstance(child, dict):
            raise ConfigurationError(f"override of '{'.'.join(path)}': '{key}' is not an object")
        node = child
    node[path[-1]] = value


def apply_overrides(tree: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """Return a copy of ``tree`` with every ``key.path=value`` override applied."""
    result = json.loads(json.dumps(tree))
    for text in overrides:
        path, value = parse_override(text)
        set_path(result, path, value)
    return result
