"""Sequence loss, learning-rate schedule and the training loop."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autograd as ag
from .augment import AugmentConfig, augment_pair
from .autograd import Adam, Tensor, clip_grad_norm
from .errors import ConfigError, DivergenceError, InputError, UsageError
from .synth import ScenePair, list_scene_indices, load_scene

log = logging.getLogger(__name__)

# third seed word for the level-jitter draws; batch items use 0..batch_size-1
_JITTER_STREAM = 2 ** 31


# ------------------------------------------------------------------- loss
def resize_to_full(pred: Tensor, scale: float, out_h: int, out_w: int) -> Tensor:
    """Bilinear resize of a prediction at ``scale`` to full resolution, values multiplied by 1/scale."""
    pred = ag.as_tensor(pred)
    if pred.shape[-2:] == (out_h, out_w):
        return pred
    return ag.resize_bilinear(pred, out_h, out_w) * (1.0 / scale)


def masked_l1(pred: Tensor, gt: np.ndarray, mask: np.ndarray) -> Tensor:
    count = float(mask.sum())
    diff = ag.absolute(pred - Tensor(gt.astype(pred.dtype)))
    return (diff * Tensor(mask.astype(pred.dtype))).sum() * (1.0 / count)


def _as_nchw(a) -> np.ndarray:
    a = np.asarray(a)
    return a.reshape((1,) * (4 - a.ndim) + a.shape) if a.ndim < 4 else a


def sequence_loss(preds: dict[float, Sequence[Tensor]], gt: np.ndarray, valid_mask: np.ndarray | None = None,
                  gamma: float = 0.9) -> Tensor:
    """Sum over scales of gamma-weighted masked mean absolute errors; the last iteration has weight 1."""
    if not 0 < gamma <= 1:
        raise ConfigError(f"gamma must be in (0, 1], got {gamma}")
    gt = _as_nchw(gt)
    mask = np.ones(gt.shape, dtype=bool) if valid_mask is None else np.broadcast_to(
        _as_nchw(valid_mask).astype(bool), gt.shape)
    if not mask.any():
        raise InputError("valid mask is empty")
    if not np.isfinite(gt[mask]).all():
        raise InputError("ground truth is not finite on the valid mask")
    gt = np.where(mask, gt, 0.0)
    h, w = gt.shape[-2:]
    total = None
    for scale, seq in preds.items():
        n = len(seq)
        for i, p in enumerate(seq):
            p = ag.as_tensor(p)
            if p.ndim == 3:
                p = p.reshape((1,) + p.shape)
            term = masked_l1(resize_to_full(p, scale, h, w), gt, mask) * float(gamma ** (n - 1 - i))
            total = term if total is None else total + term
    if total is None:
        raise InputError("no predictions given")
    return total


# --------------------------------------------------------------- schedule
@dataclass
class TrainConfig:
    gamma: float = 0.9
    base_lr: float = 1e-3
    warmup_iters: int = 15
    decay_start: int = 200
    total_iters: int = 300
    batch_size: int = 1
    seed: int = 0
    mask_occluded: bool = True
    grad_clip: float = 1.0
    val_every: int = 0
    ckpt_every: int = 0
    level_jitter: float = 0.0
    augment: AugmentConfig | None = None

    def validate(self) -> None:
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must be in (0, 1]")
        if self.base_lr <= 0:
            raise ConfigError("base_lr must be positive")
        if not 0 <= self.warmup_iters < self.decay_start < self.total_iters:
            raise ConfigError("need 0 <= warmup_iters < decay_start < total_iters")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.level_jitter < 0:
            raise ConfigError("level_jitter must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.augment is not None:
            d["augment"] = self.augment.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if d.get("augment") is not None:
            aug = dict(d["augment"])
            for k, v in aug.items():
                if isinstance(v, list):
                    aug[k] = tuple(v)
            d["augment"] = AugmentConfig(**aug)
        return cls(**d)


def lr_at(step: int, cfg: TrainConfig) -> float:
    """5% -> 100% of base over warm-up, flat, then 100% -> 5% at the final step."""
    if not 0 <= step < cfg.total_iters:
        raise UsageError(f"step {step} outside [0, {cfg.total_iters})")
    if step < cfg.warmup_iters:
        frac = 0.05 + 0.95 * step / cfg.warmup_iters
    elif step < cfg.decay_start:
        frac = 1.0
    else:
        span = max(cfg.total_iters - 1 - cfg.decay_start, 1)
        frac = 1.0 - 0.95 * (step - cfg.decay_start) / span
    return cfg.base_lr * frac


# ---------------------------------------------------------------- datasets
class PairDataset:
    """Indexable collection of ScenePairs, either in memory or read from a generated folder."""

    def __init__(self, pairs: Sequence[ScenePair] | None = None, directory: str | os.PathLike | None = None):
        if (pairs is None) == (directory is None):
            raise UsageError("give either pairs or directory")
        self._pairs = list(pairs) if pairs is not None else None
        self.directory = Path(directory) if directory is not None else None
        if self.directory is not None:
            if not self.directory.is_dir():
                raise InputError(f"dataset directory {self.directory} does not exist")
            self.indices = list_scene_indices(self.directory)
            self._cache: dict[int, ScenePair] = {}
        else:
            self.indices = list(range(len(self._pairs)))
        if not self.indices:
            raise InputError("dataset is empty")

    def __len__(self) -> int:
        return len(self.indices)

    def __getitem__(self, i: int) -> ScenePair:
        if self._pairs is not None:
            return self._pairs[i]
        idx = self.indices[i]
        if idx not in self._cache:
            self._cache[idx] = load_scene(self.directory, idx)
        return self._cache[idx]


def batch_indices(step: int, n: int, batch_size: int, seed: int) -> list[int]:
    """Deterministic function of (seed, step): an epoch-wise permutation sliced per step."""
    start = step * batch_size
    out = []
    for k in range(start, start + batch_size):
        epoch, pos = divmod(k, n)
        perm = np.random.default_rng([seed, epoch]).permutation(n)
        out.append(int(perm[pos]))
    return out


def make_batch(dataset: PairDataset, idx: list[int], step: int, cfg: TrainConfig):
    lefts, rights, disps, masks = [], [], [], []
    for j, i in enumerate(idx):
        pair = dataset[i]
        if cfg.augment is not None:
            pair = augment_pair(pair, int(np.random.default_rng([cfg.seed, step, j]).integers(0, 2 ** 31)),
                                cfg.augment)
        lefts.append(pair.left)
        rights.append(pair.right)
        disps.append(pair.disparity)
        m = pair.occlusion.astype(bool) if cfg.mask_occluded else np.ones(pair.disparity.shape, dtype=bool)
        masks.append(m)
    return (np.stack(lefts).astype(np.float32), np.stack(rights).astype(np.float32),
            np.stack(disps).astype(np.float32), np.stack(masks))


# --------------------------------------------------------------- training
def evaluate_epe(model, dataset: PairDataset, mask_occluded: bool = True, n_stages: int = 1) -> float:
    """Mean (per image) end-point error of full-resolution predictions."""
    errs = []
    for i in range(len(dataset)):
        pair = dataset[i]
        pred = model.infer(pair.left[None], pair.right[None], n_stages=n_stages)[0, 0]
        m = pair.occlusion[0].astype(bool) if mask_occluded else np.ones(pred.shape, dtype=bool)
        errs.append(float(np.abs(pred - pair.disparity[0])[m].mean()))
    return float(np.mean(errs))


@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)
    checkpoint: str | None = None
    seconds: float = 0.0

    @property
    def losses(self) -> list[float]:
        return [h["loss"] for h in self.history]


def _save(model, path, opt: Adam, step: int, cfg: TrainConfig) -> None:
    tensors = {f"optim.{k}": v for k, v in opt.state().items()}
    model.save(path, extra={"train_config": cfg.to_dict(), "step": step, "optim_t": opt.t}, extra_tensors=tensors)


def train(model, dataset: PairDataset, cfg: TrainConfig, *, val_dataset: PairDataset | None = None,
          log_path: str | os.PathLike | None = None, checkpoint_path: str | os.PathLike | None = None,
          resume: bool = False, callback: Callable[[dict], None] | None = None) -> TrainResult:
    """Adam on the sequence loss with warm-up/decay, global-norm clipping and a JSONL log.

    With ``resume`` and an existing ``checkpoint_path`` the weights, optimiser
    moments and step counter are restored and the schedule continues from there.
    """
    cfg.validate()
    if len(dataset) == 0:
        raise InputError("dataset is empty")
    params = model.parameters()
    opt = Adam(params, lr=lr_at(0, cfg))
    start = 0
    if resume and checkpoint_path is not None and Path(checkpoint_path).exists():
        tensors, meta = ag.load_checkpoint(checkpoint_path)
        model.load_state_dict({k: v for k, v in tensors.items() if not k.startswith("optim.")})
        opt.load_state({k[len("optim."):]: v for k, v in tensors.items() if k.startswith("optim.")},
                       int(meta["optim_t"]))
        start = int(meta["step"])
        log.info("resumed from %s at step %d", checkpoint_path, start)
    result = TrainResult()
    logf = open(log_path, "a" if resume else "w") if log_path is not None else None
    t0 = time.perf_counter()
    try:
        for step in range(start, cfg.total_iters):
            lr = lr_at(step, cfg)
            opt.lr = lr
            left, right, gt, mask = make_batch(dataset, batch_indices(step, len(dataset), cfg.batch_size, cfg.seed),
                                               step, cfg)
            jitter = None
            if cfg.level_jitter > 0:
                jitter = (cfg.level_jitter, np.random.default_rng([cfg.seed, step, _JITTER_STREAM]))
            out = model(Tensor(left), Tensor(right), init_jitter=jitter)
            loss = sequence_loss(out.loss_terms(), gt, mask, cfg.gamma)
            value = float(loss.data)
            if not np.isfinite(value):
                raise DivergenceError(f"loss became {value} at step {step} (lr {lr:.3g})")
            opt.zero_grad()
            ag.backward(loss)
            gnorm = clip_grad_norm(params, cfg.grad_clip) if cfg.grad_clip > 0 else float("nan")
            if not np.isfinite(gnorm) and cfg.grad_clip > 0:
                raise DivergenceError(f"gradient norm became {gnorm} at step {step}")
            opt.step()
            rec = {"step": step + 1, "lr": lr, "loss": value, "grad_norm": gnorm, "val_epe": None}
            if val_dataset is not None and cfg.val_every and ((step + 1) % cfg.val_every == 0
                                                             or step + 1 == cfg.total_iters):
                rec["val_epe"] = evaluate_epe(model, val_dataset, cfg.mask_occluded)
            result.history.append(rec)
            if logf is not None:
                logf.write(json.dumps(rec) + "\n")
                logf.flush()
            if callback is not None:
                callback(rec)
            if checkpoint_path is not None and cfg.ckpt_every and (step + 1) % cfg.ckpt_every == 0:
                _save(model, checkpoint_path, opt, step + 1, cfg)
    finally:
        if logf is not None:
            logf.close()
    if checkpoint_path is not None:
        _save(model, checkpoint_path, opt, cfg.total_iters, cfg)
        result.checkpoint = str(checkpoint_path)
    result.seconds = time.perf_counter() - t0
    return result
