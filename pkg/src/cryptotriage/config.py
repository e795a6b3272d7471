"""Run configuration: defaults, config-file loading, flag overrides.

Precedence is flags > file > defaults. Unknown keys anywhere are rejected so
a typo cannot silently fall back to a default.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

from .anomaly import Hyperparams
from .errors import ConfigError
from .explain import ExplainerConfig
from .narrate import NarratorConfig


@dataclass(frozen=True)
class PathsConfig:
    nodes_csv: str | None = None
    edges_csv: str | None = None
    workdir: str = "triage-workdir"


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8300
    static_dir: str | None = None


@dataclass(frozen=True)
class BiasConfig:
    feature: str = "btc_transacted_total"
    n_buckets: int = 4
    max_ratio: float = 3.0


@dataclass(frozen=True)
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    anomaly: Hyperparams = field(default_factory=Hyperparams)
    explainer: ExplainerConfig = field(default_factory=ExplainerConfig)
    narrator: NarratorConfig = field(default_factory=NarratorConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)
    bias: BiasConfig = field(default_factory=BiasConfig)
    schema_map: dict | None = None

    def to_dict(self) -> dict:
        doc = {}
        for section in ("paths", "anomaly", "explainer", "narrator", "service", "bias"):
            doc[section] = dataclasses.asdict(getattr(self, section))
        doc["schema_map"] = self.schema_map
        return doc


_SECTION_TYPES = {
    "paths": PathsConfig,
    "anomaly": Hyperparams,
    "explainer": ExplainerConfig,
    "narrator": NarratorConfig,
    "service": ServiceConfig,
    "bias": BiasConfig,
}


def _build_section(name: str, cls, values: dict):
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - allowed
    if unknown:
        raise ConfigError(f"unknown {name} config keys: {', '.join(sorted(unknown))}")
    try:
        instance = cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name} config: {exc}") from exc
    validate = getattr(instance, "validate", None)
    if validate:
        try:
            validate()
        except ValueError as exc:
            raise ConfigError(f"invalid {name} config: {exc}") from exc
    return instance


def config_from_dict(doc: dict) -> RunConfig:
    unknown = set(doc) - set(_SECTION_TYPES) - {"schema_map"}
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")
    sections = {}
    for name, cls in _SECTION_TYPES.items():
        values = doc.get(name, {})
        if not isinstance(values, dict):
            raise ConfigError(f"config section {name} must be an object")
        sections[name] = _build_section(name, cls, values)
    schema_map = doc.get("schema_map")
    if schema_map is not None and not isinstance(schema_map, dict):
        raise ConfigError("schema_map must be an object")
    return RunConfig(schema_map=schema_map, **sections)


def load_config_file(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return doc


def merge_config(file_doc: dict | None, overrides: dict | None) -> RunConfig:
    """Deep-merge: dataclass defaults <- file values <- explicit flag values."""
    merged: dict = {}
    for source in (file_doc or {}, overrides or {}):
        for key, value in source.items():
            if isinstance(value, dict) and isinstance(merged.get(key), dict):
                merged[key] = {**merged[key], **value}
            else:
                merged[key] = value if not isinstance(value, dict) else dict(value)
    return config_from_dict(merged)
