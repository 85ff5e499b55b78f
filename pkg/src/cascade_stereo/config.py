"""Run configuration: one YAML document, strict schema, unknown keys rejected."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .augment import AugmentConfig
from .errors import ConfigError
from .model import ModelConfig
from .synth import SHAPE_FAMILIES, TEXTURE_KINDS, SceneConfig
from .training import TrainConfig

CONFIG_ENV = "CASCADE_STEREO_CONFIG"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Strict):
    channels: int = 64
    stem_channels: int = 32
    encoder_norm: Literal["instance", "none"] = "instance"
    hidden_channels: int = 64
    context_channels: int = 64
    r: int = 4
    groups: int = 4
    dilation: int = 1
    offset_bound: float = 2.0
    use_offsets: bool = True
    attention_layers: int = 2
    attention_heads: int = 4
    iters_per_level: list[int] = Field(default_factory=lambda: [4, 4, 4])
    n_levels: int = 3
    n_stages: int = 1
    corr_type: Literal["local", "allpairs"] = "local"
    corr_mode: Literal["alternate", "1d", "2d"] = "alternate"
    schedule_first: Literal["1d", "2d"] = "2d"
    detach_sampling: bool = True
    detach_handoff: bool = True
    memory_budget_mb: int = 256


class AugmentSection(_Strict):
    enabled: bool = False
    brightness: tuple[float, float] = (0.6, 1.4)
    contrast: tuple[float, float] = (0.6, 1.4)
    gamma: tuple[float, float] = (0.7, 1.5)
    max_corner_shift: float = 2.0
    max_vertical_shift: float = 2.0
    occlusion_side: tuple[float, float] = (50.0, 100.0)
    scale: tuple[float, float] = (0.5, 2.0)
    crop: Optional[tuple[int, int]] = None
    p_chromatic: float = 1.0
    p_spatial: float = 1.0
    p_occlusion: float = 0.5
    p_resize_crop: float = 1.0


class TrainSection(_Strict):
    gamma: float = 0.9
    base_lr: float = 1e-3
    warmup_iters: int = 100
    decay_start: int = 1200
    total_iters: int = 2000
    batch_size: int = 1
    mask_occluded: bool = True
    grad_clip: float = 1.0
    val_every: int = 0
    ckpt_every: int = 100
    level_jitter: float = 0.0


class SceneSection(_Strict):
    height: int = 64
    width: int = 96
    layer_count: tuple[int, int] = (2, 5)
    shape_families: list[str] = Field(default_factory=lambda: list(SHAPE_FAMILIES))
    texture_kinds: list[str] = Field(default_factory=lambda: list(TEXTURE_KINDS))
    texture_weights: list[float] = Field(default_factory=lambda: [0.55, 0.2, 0.1, 0.15])
    d_min: float = 2.0
    d_max: float = 22.0
    distribution: Literal["uniform", "triangular"] = "uniform"
    planar_prob: float = 0.5
    max_slope: float = 0.05
    compute_occlusion: bool = True


class DataSection(_Strict):
    train_dir: Optional[str] = None
    val_dir: Optional[str] = None
    scene: SceneSection = Field(default_factory=SceneSection)


class AblationSection(_Strict):
    eval_count: int = 8
    eval_seed_offset: int = 100_000
    finetune_steps: int = 0


class RunConfig(_Strict):
    seed: int = 0
    out_dir: str = "runs/default"
    model: ModelSection = Field(default_factory=ModelSection)
    train: TrainSection = Field(default_factory=TrainSection)
    augment: AugmentSection = Field(default_factory=AugmentSection)
    data: DataSection = Field(default_factory=DataSection)
    ablation: AblationSection = Field(default_factory=AblationSection)

    # -------------------------------------------------------- conversions
    def to_model_config(self) -> ModelConfig:
        m = self.model
        cfg = ModelConfig(channels=(m.channels,) * 3, stem_channels=m.stem_channels, encoder_norm=m.encoder_norm,
                          hidden_channels=m.hidden_channels, context_channels=m.context_channels, r=m.r,
                          groups=m.groups, dilation=m.dilation, offset_bound=m.offset_bound,
                          use_offsets=m.use_offsets, attention_layers=m.attention_layers,
                          attention_heads=m.attention_heads, iters_per_level=tuple(m.iters_per_level),
                          n_levels=m.n_levels, n_stages=m.n_stages, corr_type=m.corr_type, corr_mode=m.corr_mode,
                          schedule_first=m.schedule_first, detach_sampling=m.detach_sampling,
                          detach_handoff=m.detach_handoff,
                          memory_budget_bytes=m.memory_budget_mb * 2 ** 20, seed=self.seed)
        cfg.validate()
        return cfg

    def to_augment_config(self) -> AugmentConfig | None:
        a = self.augment
        if not a.enabled:
            return None
        cfg = AugmentConfig(**a.model_dump(exclude={"enabled"}))
        cfg.validate()
        return cfg

    def to_train_config(self) -> TrainConfig:
        cfg = TrainConfig(**self.train.model_dump(), seed=self.seed, augment=self.to_augment_config())
        cfg.validate()
        return cfg

    def to_scene_config(self, seed: int | None = None) -> SceneConfig:
        s = self.data.scene.model_dump()
        s["layer_count"] = tuple(s["layer_count"])
        for key in ("shape_families", "texture_kinds", "texture_weights"):
            s[key] = tuple(s[key])
        cfg = SceneConfig(**s, seed=self.seed if seed is None else seed)
        cfg.validate()
        return cfg


def _format_errors(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"])
        if err["type"] == "extra_forbidden":
            parts.append(f"unknown key '{loc}'")
        else:
            parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_config(data: dict | None) -> RunConfig:
    try:
        return RunConfig.model_validate(data or {})
    except ValidationError as exc:
        raise ConfigError(f"invalid config: {_format_errors(exc)}") from None


def load_config(path: str | os.PathLike | None = None) -> RunConfig:
    """Read a YAML run config; ``None`` falls back to $CASCADE_STEREO_CONFIG, then defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} not found")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: not valid YAML ({exc})") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    return parse_config(data)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)
