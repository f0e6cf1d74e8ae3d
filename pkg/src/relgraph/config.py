"""INI-style run configuration with [model], [train], and [data] sections.

Presets shipped with the package (one per benchmark dataset) can be
referenced by name; a directory of additional presets can be supplied
via the RELGRAPH_PRESETS environment variable.
"""
from __future__ import annotations

import configparser
import os
from importlib import resources
from pathlib import Path

from .training import ConfigError, TrainConfig

_MODEL_KEYS = {
    "d": int, "heads": int, "relation_layers": int, "entity_layers": int,
    "relation_activation": str, "entity_activation": str,
}
_TRAIN_KEYS = {
    "learning_rate": float, "weight_decay": float, "lr_decay": float,
    "negatives": int, "batch_size": int, "max_epochs": int,
    "patience": int, "freeze_policy": str, "seed": int,
}
_DATA_KEYS = {"train": str, "valid": str, "test": str}


def _parse(parser: configparser.ConfigParser, source: str) -> tuple[TrainConfig, dict]:
    config = TrainConfig()
    data: dict[str, str] = {}
    for section, keys in (("model", _MODEL_KEYS), ("train", _TRAIN_KEYS)):
        if not parser.has_section(section):
            continue
        for key, raw in parser.items(section):
            if key not in keys:
                raise ConfigError(f"{source}: unknown key [{section}] {key}")
            try:
                setattr(config, key, keys[key](raw))
            except ValueError as exc:
                raise ConfigError(f"{source}: bad value for {key}: {raw!r}") from exc
    if parser.has_section("data"):
        for key, raw in parser.items("data"):
            if key not in _DATA_KEYS:
                raise ConfigError(f"{source}: unknown key [data] {key}")
            data[key] = raw
    extra = set(parser.sections()) - {"model", "train", "data"}
    if extra:
        raise ConfigError(f"{source}: unknown sections {sorted(extra)}")
    config.validate()
    return config, data


def load_config(path) -> tuple[TrainConfig, dict]:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file: {path}")
    return _parse(parser, str(path))


def preset_names() -> list[str]:
    names = []
    env_dir = os.environ.get("RELGRAPH_PRESETS")
    if env_dir:
        names += [p.stem for p in sorted(Path(env_dir).glob("*.cfg"))]
    pkg_dir = resources.files(__package__) / "presets"
    names += sorted(p.name[:-4] for p in pkg_dir.iterdir()
                    if p.name.endswith(".cfg"))
    return sorted(dict.fromkeys(names))


def load_preset(name: str) -> tuple[TrainConfig, dict]:
    env_dir = os.environ.get("RELGRAPH_PRESETS")
    if env_dir:
        candidate = Path(env_dir) / f"{name}.cfg"
        if candidate.is_file():
            return load_config(candidate)
    pkg_file = resources.files(__package__) / "presets" / f"{name}.cfg"
    if pkg_file.is_file():
        parser = configparser.ConfigParser()
        parser.read_string(pkg_file.read_text())
        return _parse(parser, f"preset {name}")
    raise ConfigError(f"unknown preset {name!r}; available: "
                      + ", ".join(preset_names()))


def resolved_config_text(config: TrainConfig, data: dict) -> str:
    """Effective configuration in the same INI format it is read from."""
    lines = ["[model]"]
    lines += [f"{k} = {getattr(config, k)}" for k in _MODEL_KEYS]
    lines.append("")
    lines.append("[train]")
    lines += [f"{k} = {getattr(config, k)}" for k in _TRAIN_KEYS]
    if data:
        lines.append("")
        lines.append("[data]")
        lines += [f"{k} = {v}" for k, v in data.items()]
    return "\n".join(lines) + "\n"
