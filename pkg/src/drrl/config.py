"""Flat `key = value` run configuration with section headers, strict key
validation, env-var overrides, and JSON export."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .graphmodel import BackboneConfig
from .losses import LossSpec
from .trainer import TrainConfig

ENV_PREFIX = "DRRL_"


@dataclass
class DataConfig:
    input: str = ""


@dataclass
class SplitConfig:
    kind: str = "iid"  # iid | temporal | noise
    train_frac: float = 0.8
    val_frac: float = 0.1
    test_frac: float = 0.2
    seed: int = 0

    def validate(self):
        if self.kind not in ("iid", "temporal", "noise"):
            raise ValueError(f"split.kind must be iid, temporal or noise, got {self.kind!r}")
        return self


@dataclass
class EvalConfig:
    ks: tuple = (20,)


@dataclass
class OutputConfig:
    dir: str = "runs/out"


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    loss: LossSpec = field(default_factory=LossSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self):
        errors = []
        for section in (self.split, self.backbone, self.loss, self.train):
            try:
                section.validate()
            except ValueError as exc:
                errors.append(str(exc))
        if errors:
            raise ValueError("; ".join(errors))
        return self


_SECTIONS = {
    "data": DataConfig,
    "split": SplitConfig,
    "backbone": BackboneConfig,
    "loss": LossSpec,
    "train": TrainConfig,
    "eval": EvalConfig,
    "output": OutputConfig,
}


def _coerce(raw, example):
    if isinstance(example, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(example, int):
        return int(raw)
    if isinstance(example, float):
        return float(raw)
    if isinstance(example, tuple):
        return tuple(int(x) for x in raw.replace(",", " ").split())
    return raw


def parse_config(text) -> RunConfig:
    """Parse the flat format, collecting every error before raising."""
    cfg = RunConfig()
    errors = []
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _SECTIONS:
                errors.append(f"line {lineno}: unknown section [{name}]")
                section = None
            else:
                section = name
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected `key = value`, got {line!r}")
            continue
        if section is None:
            errors.append(f"line {lineno}: key outside any [section]")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        target = getattr(cfg, section)
        names = {f.name for f in fields(target)}
        if key not in names:
            errors.append(f"line {lineno}: unknown key {section}.{key}")
            continue
        try:
            setattr(target, key, _coerce(value, getattr(target, key)))
        except ValueError as exc:
            errors.append(f"line {lineno}: {section}.{key}: {exc}")
    if errors:
        raise ValueError("config errors: " + "; ".join(errors))
    return cfg


def apply_env_overrides(cfg: RunConfig, environ=None) -> RunConfig:
    """Override any key through DRRL_<SECTION>__<KEY> variables."""
    environ = os.environ if environ is None else environ
    errors = []
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX) or "__" not in name:
            continue
        section, _, key = name[len(ENV_PREFIX):].lower().partition("__")
        if section not in _SECTIONS:
            continue
        target = getattr(cfg, section)
        if key not in {f.name for f in fields(target)}:
            errors.append(f"{name}: unknown key {section}.{key}")
            continue
        try:
            setattr(target, key, _coerce(raw, getattr(target, key)))
        except ValueError as exc:
            errors.append(f"{name}: {exc}")
    if errors:
        raise ValueError("env override errors: " + "; ".join(errors))
    return cfg


def load_config(path, with_env=True) -> RunConfig:
    cfg = parse_config(Path(path).read_text())
    if with_env:
        apply_env_overrides(cfg)
    return cfg.validate()


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for section, _ in _SECTIONS.items():
        target = getattr(cfg, section)
        lines.append(f"[{section}]")
        for f in fields(target):
            value = getattr(target, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name} = {value}")
        lines.append("")
    return "\n".join(lines)


def config_to_json(cfg: RunConfig) -> str:
    return json.dumps(dataclasses.asdict(cfg), indent=2)
