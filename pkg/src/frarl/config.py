"""Plain-text ``key = value`` configuration for training runs.

Nested settings use dotted keys::

    # comments and blank lines are ignored
    method = frarl
    total_steps = 300000
    ppo.learning_rate = 0.0003
    ce.n_samples = 50
    sim.offset_range = 0, 40

Unknown keys are errors; keys that are not given keep their defaults.
:func:`dump_config` writes every key, so its output documents all defaults.
"""

from __future__ import annotations

import dataclasses
import typing
from typing import Any, Dict, Iterable, List, Tuple

from .trainers import TrainConfig


class ConfigError(ValueError):
    pass


def _flatten(obj, prefix: str = "") -> List[Tuple[str, Any]]:
    out = []
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            out += _flatten(value, f"{prefix}{f.name}.")
        else:
            out.append((prefix + f.name, value))
    return out


def _render(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_render(v) for v in value)
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def dump_config(cfg: TrainConfig) -> str:
    return "".join(f"{k} = {_render(v)}\n" for k, v in _flatten(cfg))


def _field_types(cls) -> Dict[str, Any]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


def _convert(raw: str, tp, key: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union:  # Optional[X]
        if raw.lower() == "none":
            return None
        tp = next(a for a in args if a is not type(None))
        origin, args = typing.get_origin(tp), typing.get_args(tp)
    try:
        if origin is tuple:
            parts = [p.strip() for p in raw.split(",")]
            if len(parts) != len(args):
                raise ConfigError(f"{key}: expected {len(args)} comma-separated values")
            return tuple(_convert(p, a, key) for p, a in zip(parts, args))
        if tp is bool:
            if raw.lower() in ("true", "yes", "1"):
                return True
            if raw.lower() in ("false", "no", "0"):
                return False
            raise ConfigError(f"{key}: expected true or false, got {raw!r}")
        if tp is int:
            return int(raw.replace("_", ""))
        if tp is float:
            return float(raw)
        if tp is str:
            return raw
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{key}: cannot parse {raw!r} as {tp.__name__}") from None
    raise ConfigError(f"{key}: unsupported type {tp}")


def parse_pairs(lines: Iterable[str]) -> Dict[str, str]:
    pairs: Dict[str, str] = {}
    for n, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"line {n}: expected 'key = value', got {line.strip()!r}")
        key, value = (s.strip() for s in text.split("=", 1))
        if not key:
            raise ConfigError(f"line {n}: empty key")
        pairs[key] = value
    return pairs


def build_config(pairs: Dict[str, str], base: TrainConfig = None) -> TrainConfig:
    """Apply ``pairs`` on top of ``base`` (defaults if omitted)."""
    base = base or TrainConfig()
    top: Dict[str, Any] = {}
    nested: Dict[str, Dict[str, Any]] = {}
    types = _field_types(TrainConfig)
    for key, raw in pairs.items():
        head, _, rest = key.partition(".")
        if head not in types:
            raise ConfigError(f"unknown key {key!r}")
        sub = getattr(base, head)
        if rest:
            if not dataclasses.is_dataclass(sub):
                raise ConfigError(f"unknown key {key!r}")
            sub_types = _field_types(type(sub))
            if rest not in sub_types:
                raise ConfigError(f"unknown key {key!r}")
            nested.setdefault(head, {})[rest] = _convert(raw, sub_types[rest], key)
        else:
            if dataclasses.is_dataclass(sub):
                raise ConfigError(f"{key!r} is a section; set {key}.<name> instead")
            top[head] = _convert(raw, types[head], key)
    kwargs = {f.name: getattr(base, f.name) for f in dataclasses.fields(TrainConfig)}
    kwargs.update(top)
    try:
        for head, values in nested.items():
            kwargs[head] = dataclasses.replace(getattr(base, head), **values)
        return TrainConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, overrides: Dict[str, str] = None) -> TrainConfig:
    with open(path) as fh:
        pairs = parse_pairs(fh)
    pairs.update(overrides or {})
    return build_config(pairs)
