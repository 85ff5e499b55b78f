"""The full network: shared encoder, coarse-level attention and one shared RUM."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autograd as ag
from .agcl import grid_side, window_size
from .autograd import Module, Tensor, load_checkpoint, save_checkpoint
from .errors import ConfigError
from .features import FeatureAttention, FeaturePyramid, PyramidEncoder
from .rum import CascadeOutput, RecurrentUpdateModule, cascade_forward, stacked_inference

ALL_SCALES = (1 / 16, 1 / 8, 1 / 4)


@dataclass
class ModelConfig:
    channels: tuple[int, int, int] = (64, 64, 64)
    stem_channels: int = 32
    encoder_norm: str = "instance"
    hidden_channels: int = 64
    context_channels: int = 64
    r: int = 4
    groups: int = 4
    dilation: int = 1
    offset_bound: float = 2.0
    use_offsets: bool = True
    attention_layers: int = 2
    attention_heads: int = 4
    iters_per_level: tuple[int, ...] = (4, 4, 4)
    n_levels: int = 3
    n_stages: int = 1
    corr_type: str = "local"
    corr_mode: str = "alternate"
    schedule_first: str = "2d"
    detach_sampling: bool = True
    detach_handoff: bool = True
    memory_budget_bytes: int = 256 * 2 ** 20
    seed: int = 0

    def validate(self) -> None:
        if len(set(self.channels)) != 1:
            raise ConfigError("all pyramid levels must share one channel count (the RUM is shared)")
        if self.channels[0] % self.groups:
            raise ConfigError(f"channels {self.channels[0]} not divisible by groups {self.groups}")
        if self.encoder_norm not in ("instance", "none"):
            raise ConfigError(f"encoder_norm must be 'instance' or 'none', got {self.encoder_norm!r}")
        if self.corr_type not in ("local", "allpairs"):
            raise ConfigError(f"corr_type must be 'local' or 'allpairs', got {self.corr_type!r}")
        if self.corr_mode not in ("alternate", "1d", "2d"):
            raise ConfigError(f"corr_mode must be alternate, 1d or 2d, got {self.corr_mode!r}")
        if self.schedule_first not in ("1d", "2d"):
            raise ConfigError("schedule_first must be '1d' or '2d'")
        if self.corr_mode != "1d":
            grid_side(self.r)
        if not 1 <= self.n_levels <= 3:
            raise ConfigError("n_levels must be in 1..3")
        if len(self.iters_per_level) != self.n_levels:
            raise ConfigError(f"iters_per_level {list(self.iters_per_level)} needs {self.n_levels} entries")
        if any(i < 1 for i in self.iters_per_level):
            raise ConfigError("every level needs at least one iteration")
        if self.n_stages not in (1, 2, 3):
            raise ConfigError("n_stages must be 1, 2 or 3")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        d["iters_per_level"] = list(self.iters_per_level)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["channels"] = tuple(d["channels"])
        d["iters_per_level"] = tuple(d["iters_per_level"])
        return cls(**d)


class StereoModel(Module):
    def __init__(self, config: ModelConfig | None = None):
        self.config = config or ModelConfig()
        self.config.validate()
        cfg = self.config
        self.encoder = PyramidEncoder(cfg.channels, cfg.stem_channels, seed=cfg.seed, norm=cfg.encoder_norm)
        self.attention = (FeatureAttention(cfg.channels[0], cfg.attention_layers, cfg.attention_heads,
                                           seed=cfg.seed + 1)
                          if cfg.attention_layers > 0 else None)
        self.rum = RecurrentUpdateModule(cfg.channels[0], cfg.hidden_channels, cfg.context_channels,
                                         corr_ch=cfg.groups * window_size(cfg.r), r=cfg.r,
                                         offset_bound=cfg.offset_bound, seed=cfg.seed + 2)

    @property
    def level_scales(self) -> list[float]:
        return list(ALL_SCALES[-self.config.n_levels:])

    def pyramids(self, left: Tensor, right: Tensor) -> tuple[FeaturePyramid, FeaturePyramid]:
        """Encode both views in one batched pass through the shared encoder."""
        left, right = ag.as_tensor(left), ag.as_tensor(right)
        n = left.shape[0]
        feats = self.encoder(ag.concat([left, right], axis=0))
        lf = tuple(f[:n] for f in feats)
        rf = tuple(f[n:] for f in feats)
        return FeaturePyramid(lf, "left"), FeaturePyramid(rf, "right")

    def forward(self, left: Tensor, right: Tensor, iters_per_level=None, corr_mode: str | None = None,
                init_jitter=None) -> CascadeOutput:
        return cascade_forward(self, self.pyramids(left, right), iters_per_level, corr_mode=corr_mode,
                               init_jitter=init_jitter)

    def infer(self, left: np.ndarray, right: np.ndarray, n_stages: int | None = None, iters_per_level=None,
              corr_mode: str | None = None) -> np.ndarray:
        """Full-resolution disparity (N,1,H,W) without recording a graph."""
        with ag.no_grad():
            lt = Tensor(np.asarray(left, dtype=np.float32))
            rt = Tensor(np.asarray(right, dtype=np.float32))
            out = stacked_inference(self, lt, rt, n_stages or self.config.n_stages, iters_per_level, corr_mode)
        return out.data

    # ------------------------------------------------------------ persistence
    def save(self, path, extra: dict | None = None, extra_tensors: dict | None = None) -> None:
        tensors = dict(self.state_dict())
        if extra_tensors:
            tensors.update(extra_tensors)
        meta = {"model_config": self.config.to_dict()}
        if extra:
            meta.update(extra)
        save_checkpoint(path, tensors, meta)

    @classmethod
    def load(cls, path) -> tuple["StereoModel", dict, dict]:
        tensors, meta = load_checkpoint(path)
        model = cls(ModelConfig.from_dict(meta["model_config"]))
        own = {k: v for k, v in tensors.items() if not k.startswith("optim.")}
        model.load_state_dict(own)
        extra = {k[len("optim."):]: v for k, v in tensors.items() if k.startswith("optim.")}
        return model, meta, extra
