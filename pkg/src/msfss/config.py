"""Run configuration and the flat ``key = value`` config file format.

Lists are comma separated, booleans are true/false, ``#`` starts a comment.
Unknown keys are an error.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path

from .data.augment import AugmentPolicy
from .data.shapes import ShapesSpec
from .encoder import EncoderConfig
from .fem import ScaleConfig
from .errors import ConfigError
from .losses import LossConfig
from .model import ModelConfig

STAGES = ("pretrain", "meta_train", "evaluate", "generalized_eval")


@dataclass
class RunConfig:
    stage: str = "pretrain"
    fold: int = 0
    shot: int = 1
    num_folds: int = 4
    seed: int = 0
    output_dir: str = "runs/desk"

    # data: an existing dataset root, or a shapes benchmark generated there on demand
    dataset_root: str = "data/shapes"
    dataset_kind: str = "shapes"          # "shapes" or "directory"
    num_shape_classes: int = 12
    samples_per_class: int = 100
    background_texture: str = "noise"
    data_seed: int = 0
    augment: bool = True

    # model
    input_size: tuple[int, ...] = (96, 96)
    stage_channel_widths: tuple[int, ...] = (16, 32, 64, 128)
    stage_strides: tuple[int, ...] = (2, 2, 2, 1)
    mid_channel_width: int = 64
    encoder_norm: str = "group"
    scale_sizes: tuple[int, ...] = (24, 12, 6)
    fem_norm: str = "none"
    base_input: str = "high"
    share_gate: bool = True
    per_scale_ensemble: bool = True
    prior_mask_background: bool = True
    freeze_encoder: bool = True

    # optimisation
    epochs: int = 20                      # pre-training epochs
    meta_episodes: int = 2000             # meta-training episodes (steps = episodes / batch_size)
    pretrain_lr: float = 2.5e-2
    meta_lr: float = 5e-2
    batch_size: int = 4
    pretrain_batch_size: int = 8
    momentum: float = 0.9
    weight_decay: float = 1e-4
    poly_power: float = 0.9
    grad_clip: float = 5.0
    enable_meta_inner: bool = True
    enable_final_inner: bool = True

    # evaluation
    episodes: int = 1000
    threshold: float = 0.5
    viz: bool = False
    viz_limit: int = 20

    def validate(self) -> "RunConfig":
        if self.stage not in STAGES:
            raise ConfigError(f"stage must be one of {STAGES}")
        if not 0 <= self.fold < self.num_folds:
            raise ConfigError(f"fold {self.fold} outside 0..{self.num_folds - 1}")
        if self.shot < 1:
            raise ConfigError("shot must be >= 1")
        if self.pretrain_lr <= 0 or self.meta_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.batch_size < 1 or self.pretrain_batch_size < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.episodes < 0 or self.epochs < 0 or self.meta_episodes < 0:
            raise ConfigError("counts must be non-negative")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must lie in (0, 1)")
        if self.dataset_kind not in ("shapes", "directory"):
            raise ConfigError(f"unknown dataset_kind {self.dataset_kind!r}")
        try:
            self.model_config()
            ScaleConfig(tuple(self.scale_sizes))
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        return self

    # derived configs -----------------------------------------------------
    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(tuple(self.stage_channel_widths), self.mid_channel_width,
                             tuple(self.input_size), tuple(self.stage_strides), norm=self.encoder_norm)

    def model_config(self) -> ModelConfig:
        return ModelConfig(self.encoder_config(), tuple(self.scale_sizes), self.fem_norm, self.base_input,
                           share_gate=self.share_gate, per_scale_ensemble=self.per_scale_ensemble,
                           prior_mask_background=self.prior_mask_background,
                           freeze_encoder=self.freeze_encoder)

    def loss_config(self) -> LossConfig:
        return LossConfig(self.enable_meta_inner, self.enable_final_inner)

    def shapes_spec(self) -> ShapesSpec:
        return ShapesSpec(self.dataset_root, self.num_shape_classes, tuple(self.input_size),
                          self.samples_per_class, self.background_texture, self.data_seed, self.num_folds)

    def augment_policy(self) -> AugmentPolicy | None:
        return AugmentPolicy.training(tuple(self.input_size)) if self.augment else None

    def snapshot(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _field_types():
    hints = typing.get_type_hints(RunConfig)
    return {f.name: hints[f.name] for f in fields(RunConfig)}


def parse_value(name: str, raw: str, typ):
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typing.get_origin(typ) is tuple:
            items = [v for v in raw.replace(",", " ").split() if v]
            return tuple(int(v) for v in items)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def coerce(values: dict) -> dict:
    types = _field_types()
    out = {}
    for key, raw in values.items():
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = parse_value(key, raw, types[key]) if isinstance(raw, str) else raw
    return out


def parse_config_text(text: str) -> dict:
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return coerce(values)


def load_config(path: str | Path | None = None, **overrides) -> RunConfig:
    values = {}
    if path is not None:
        try:
            values.update(parse_config_text(Path(path).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values.update(coerce({k: v for k, v in overrides.items() if v is not None}))
    return RunConfig(**values).validate()


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for key, value in cfg.snapshot().items():
        if isinstance(value, list):
            value = ", ".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = str(value).lower()
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def config_from_snapshot(snap: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    values = {k: tuple(v) if isinstance(v, list) else v for k, v in snap.items() if k in known}
    return RunConfig(**values)
