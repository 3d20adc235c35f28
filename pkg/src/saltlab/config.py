"""Run configuration: nested dataclasses loaded strictly from JSON or YAML."""
from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .dataset import CorpusConfig
from .denoiser import ModelConfig
from .errors import ConfigError
from .guidance import GuidanceConfig
from .pipeline import PipelineConfig
from .sampler import SamplerConfig
from .training import TrainConfig


@dataclass(frozen=True)
class ScheduleConfig:
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02


@dataclass(frozen=True)
class AssetConfig:
    background: Optional[str] = "green-plain"
    object: Optional[str] = "cat"


@dataclass(frozen=True)
class EvalConfig:
    split: str = "single"
    limit: Optional[int] = None
    chunk: int = 25
    bind: str = "both"
    jobs: int = 1


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out: str = "runs/default"
    model: ModelConfig = ModelConfig()
    schedule: ScheduleConfig = ScheduleConfig()
    train: TrainConfig = TrainConfig()
    corpus: CorpusConfig = CorpusConfig()
    sampler: SamplerConfig = SamplerConfig()
    guidance: GuidanceConfig = GuidanceConfig()
    pipeline: dict = field(default_factory=dict)
    assets: AssetConfig = AssetConfig()
    eval: EvalConfig = EvalConfig()
    methods: tuple[str, ...] = ("sd", "attention-only", "guided-only", "attention-with-guided", "salt", "salt-ag")

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(sampler=self.sampler, guidance=self.guidance, **self.pipeline)

    def to_dict(self) -> dict:
        return _to_plain(self)


_PIPELINE_KEYS = {"baseline_iters", "salt_iters", "inv_steps", "sde_t"}


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    return obj


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path + '.' if path else ''}{unknown[0]}: unknown key")
    kwargs = {}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        hint = hints[key]
        if dataclasses.is_dataclass(hint):
            kwargs[key] = _build(hint, value, where)
        elif key == "pipeline" and cls is RunConfig:
            bad = sorted(set(value) - _PIPELINE_KEYS) if isinstance(value, dict) else ["<not a mapping>"]
            if bad:
                raise ConfigError(f"{where}.{bad[0]}: unknown key")
            kwargs[key] = dict(value)
        else:
            kwargs[key] = _coerce(hint, value, where)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def _coerce(hint, value, where):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union and type(None) in args:
        if value is None:
            return None
        hint = next(a for a in args if a is not type(None))
        origin, args = typing.get_origin(hint), typing.get_args(hint)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list")
        inner = args[0] if args else object
        return tuple(_coerce(inner, v, where) for v in value)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    return value


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "")


def load_config(path) -> RunConfig:
    """Parse ``path`` (.json, .yaml or .yml); errors name the line or the field."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    text = p.read_text()
    if p.suffix in (".yaml", ".yml"):
        import yaml

        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            line = f" line {mark.line + 1}" if mark else ""
            raise ConfigError(f"{p}:{line} invalid YAML") from exc
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(data)
