"""Flat ``key = value`` run configuration.

One file can set any field of ``MetaConfig``, ``SynthSpec`` and
``LearnerConfig``; field names are globally unique so no sections are
needed. ``#`` starts a comment. Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .data import SynthSpec
from .learner import LearnerConfig
from .meta import MetaConfig

_SECTIONS = {"meta": MetaConfig, "synth": SynthSpec, "learner": LearnerConfig}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    meta: MetaConfig = field(default_factory=MetaConfig)
    synth: SynthSpec = field(default_factory=SynthSpec)
    learner: LearnerConfig = field(default_factory=LearnerConfig)

    def replace(self, **updates) -> RunConfig:
        """Return a copy with fields updated by bare field name."""
        parts = {name: {} for name in _SECTIONS}
        for key, value in updates.items():
            parts[_owner(key)][key] = value
        return RunConfig(**{
            name: dataclasses.replace(getattr(self, name), **kv) for name, kv in parts.items()
        })

    def to_text(self) -> str:
        lines = []
        for name in _SECTIONS:
            lines.append(f"# {name}")
            for f in dataclasses.fields(getattr(self, name)):
                lines.append(f"{f.name} = {getattr(getattr(self, name), f.name)}")
        return "\n".join(lines) + "\n"


def _owner(key: str) -> str:
    for name, cls in _SECTIONS.items():
        if key in {f.name for f in dataclasses.fields(cls)}:
            return name
    raise ConfigError(f"unknown config key {key!r}")


def _convert(cls, key: str, raw: str):
    ftype = {f.name: f.type for f in dataclasses.fields(cls)}[key]
    ftype = ftype if isinstance(ftype, str) else ftype.__name__
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {ftype}, got {raw!r}") from None
    return raw


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    updates: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        try:
            owner = _owner(key)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
        if key in updates:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        updates[key] = _convert(_SECTIONS[owner], key, raw)
    try:
        return RunConfig().replace(**updates)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: config file not found")
    return parse_config(path.read_text(encoding="utf-8"), str(path))
