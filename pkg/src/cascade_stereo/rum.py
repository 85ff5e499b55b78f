"""Recurrent update module, cascaded refinement and stacked-cascade inference."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from . import autograd as ag
from .agcl import (MODE_1D, MODE_2D, AllPairsLookup, CorrVolume, OffsetHead, alternate_schedule, local_corr,
                   window_size)
from .autograd import Conv2d, Module, Tensor
from .errors import InputError
from .features import FeaturePyramid

if TYPE_CHECKING:
    from .model import StereoModel


@dataclass
class DisparityField:
    """Horizontal displacement in pixels of the grid it lives on."""

    values: np.ndarray  # (1,H,W)
    scale: float = 1.0

    def rescaled(self, new_scale: float) -> "DisparityField":
        ratio = new_scale / self.scale
        _, h, w = self.values.shape
        up = ag.resize_bilinear(Tensor(self.values[None]), round(h * ratio), round(w * ratio)).data[0]
        return DisparityField(up * ratio, new_scale)


@dataclass
class RumState:
    hidden: Tensor
    context: Tensor


class RecurrentUpdateModule(Module):
    """Convolutional GRU that turns correlation lookups into disparity increments.

    One instance serves every cascade level and every stacked stage.
    """

    def __init__(self, feat_ch: int, hidden_ch: int = 64, context_ch: int = 64, corr_ch: int = 36,
                 r: int = 4, offset_bound: float = 2.0, seed: int = 1):
        rng = np.random.default_rng(seed)
        self.hidden_ch, self.context_ch = hidden_ch, context_ch
        self.D = window_size(r)
        self.ctx_proj = Conv2d(feat_ch, context_ch, 1, rng)
        self.hid_proj = Conv2d(feat_ch, hidden_ch, 1, rng, gain=1.0)
        self.offset_head = OffsetHead(hidden_ch, context_ch, r, rng, bound=offset_bound)
        motion_ch = 48
        self.enc_corr = Conv2d(corr_ch, 64, 1, rng)
        self.enc_disp = Conv2d(1, 16, 3, rng)
        self.enc_merge = Conv2d(80, motion_ch - 1, 3, rng)
        gru_in = hidden_ch + motion_ch + context_ch
        self.convz = Conv2d(gru_in, hidden_ch, 3, rng, gain=1.0)
        self.convr = Conv2d(gru_in, hidden_ch, 3, rng, gain=1.0)
        self.convq = Conv2d(gru_in, hidden_ch, 3, rng, gain=1.0)
        self.delta1 = Conv2d(hidden_ch, 64, 3, rng)
        self.delta2 = Conv2d(64, 1, 3, rng, gain=0.1)
        self.mask1 = Conv2d(hidden_ch, 64, 3, rng)
        self.mask2 = Conv2d(64, 9 * 16, 1, rng, gain=0.1)

    def init_state(self, left_feat: Tensor) -> RumState:
        return RumState(hidden=ag.tanh(self.hid_proj(left_feat)), context=ag.relu(self.ctx_proj(left_feat)))


def gru_step(rum: RecurrentUpdateModule, state: RumState, corr, disp: Tensor, need_mask: bool = True):
    """One GRU update.  Returns (new state, disparity increment, upsampling mask logits or None)."""
    corr_t = corr.values if isinstance(corr, CorrVolume) else ag.as_tensor(corr)
    disp = ag.as_tensor(disp)
    h = state.hidden
    if not (corr_t.shape[-2:] == disp.shape[-2:] == h.shape[-2:] == state.context.shape[-2:]):
        raise InputError("gru_step inputs must share spatial size")
    c = ag.relu(rum.enc_corr(corr_t))
    d = ag.relu(rum.enc_disp(disp))
    motion = ag.concat([ag.relu(rum.enc_merge(ag.concat([c, d], axis=1))), disp], axis=1)
    x = ag.concat([motion, state.context], axis=1)
    hx = ag.concat([h, x], axis=1)
    z = ag.sigmoid(rum.convz(hx))
    r = ag.sigmoid(rum.convr(hx))
    q = ag.tanh(rum.convq(ag.concat([r * h, x], axis=1)))
    h_new = (1.0 - z) * h + z * q
    delta = rum.delta2(ag.relu(rum.delta1(h_new)))
    mask = rum.mask2(ag.relu(rum.mask1(h_new))) * 0.25 if need_mask else None
    return RumState(h_new, state.context), delta, mask


@dataclass
class RumRun:
    predictions: list[Tensor]
    state: RumState
    mask: Tensor | None


def run_rum(rum: RecurrentUpdateModule, level_features: tuple[Tensor, Tensor], init_disp: Tensor, n_iters: int,
            state: RumState, *, r: int = 4, groups: int = 4, dilation: int = 1, corr_mode: str = "alternate",
            schedule_first: str = MODE_2D, use_offsets: bool = True, detach_sampling: bool = True,
            lookup: AllPairsLookup | None = None, want_mask: bool = False) -> RumRun:
    """Iterate correlation + GRU ``n_iters`` times starting from ``init_disp``.

    The sampling position uses a detached copy of the running disparity when
    ``detach_sampling`` is set; the running sum itself stays differentiable,
    so gradients still reach ``init_disp``.
    """
    if n_iters < 1:
        raise InputError("n_iters must be >= 1")
    f1, f2 = level_features
    disp = ag.as_tensor(init_disp)
    preds = []
    mask = None
    for i in range(n_iters):
        mode = alternate_schedule(i, schedule_first) if corr_mode == "alternate" else corr_mode
        probe = disp.detach() if detach_sampling else disp
        if lookup is not None:
            corr = lookup(probe)
        else:
            offsets = rum.offset_head(state.hidden, state.context) if use_offsets else None
            corr = local_corr(f1, f2, probe, offsets, mode=mode, r=r, dilation=dilation, groups=groups)
        state, delta, m = gru_step(rum, state, corr, probe, need_mask=want_mask and i == n_iters - 1)
        if m is not None:
            mask = m
        disp = disp + delta
        preds.append(disp)
    return RumRun(preds, state, mask)


def convex_upsample(disp: Tensor, weights: Tensor, factor: int = 4, normalized: bool = False) -> Tensor:
    """Full-resolution disparity as convex combinations of 3x3 coarse neighbourhoods.

    ``weights`` is (N, 9*factor^2, H, W) laid out as (9, factor, factor);
    unless ``normalized`` they are logits and get a softmax over the 9 taps.
    Values are multiplied by ``factor``.  Borders replicate the edge.
    """
    disp, weights = ag.as_tensor(disp), ag.as_tensor(weights)
    n, _, h, w = disp.shape
    wts = weights.reshape(n, 9, factor, factor, h, w)
    if not normalized:
        wts = ag.softmax(wts, axis=1)
    padded = ag.pad2d(disp * float(factor), 1, mode="edge")
    taps = [padded[:, :, dy:dy + h, dx:dx + w] for dy in range(3) for dx in range(3)]
    nb = ag.concat(taps, axis=1).reshape(n, 9, 1, 1, h, w)
    up = (wts * nb).sum(axis=1)  # n, f, f, h, w
    up = ag.transpose(up, (0, 3, 1, 4, 2)).reshape(n, 1, h * factor, w * factor)
    return up


def upsample_disparity(disp: Tensor, factor: int = 2) -> Tensor:
    """Bilinear spatial upsampling with values scaled by the same factor."""
    h, w = disp.shape[-2:]
    return ag.resize_bilinear(disp, h * factor, w * factor) * float(factor)


def downsample_disparity(disp: Tensor, out_h: int, out_w: int) -> Tensor:
    h, w = disp.shape[-2:]
    return ag.resize_bilinear(disp, out_h, out_w) * (out_w / w)


@dataclass
class CascadeOutput:
    levels: dict[float, list[Tensor]] = field(default_factory=dict)
    final: Tensor | None = None

    def loss_terms(self) -> dict[float, list[Tensor]]:
        """Per-scale prediction lists for the sequence loss, full resolution included."""
        terms = dict(self.levels)
        if self.final is not None:
            terms[1.0] = [self.final]
        return terms

    @property
    def count(self) -> int:
        return sum(len(v) for v in self.levels.values())


def cascade_forward(model: "StereoModel", pyramids: tuple[FeaturePyramid, FeaturePyramid],
                    iters_per_level=None, scales=None, init_disp: Tensor | None = None,
                    corr_mode: str | None = None, init_jitter=None) -> CascadeOutput:
    """Coarse-to-fine refinement over the chosen pyramid levels, then convex upsampling.

    ``scales`` defaults to the model's configured levels (coarsest first).
    The first level starts from zeros unless ``init_disp`` is given; every
    later level starts from the doubled, upsampled result of the previous one
    (cut from the graph when ``detach_handoff`` is set, so each level's loss
    trains only that level's updates).

    ``init_jitter`` is an optional ``(amplitude, rng)`` pair used in training:
    each image's hand-off to a finer level is shifted by a constant drawn from
    U(-amplitude, amplitude), so the finer level learns to fix coarse errors.
    """
    cfg = model.config
    scales = list(scales or model.level_scales)
    iters = list(iters_per_level or cfg.iters_per_level)[-len(scales):]
    if len(iters) != len(scales):
        raise InputError(f"need one iteration count per level, got {iters} for {len(scales)} levels")
    left, right = pyramids
    out = CascadeOutput()
    disp = init_disp
    run = None
    for li, (scale, n_it) in enumerate(zip(scales, iters)):
        f1, f2 = left.at(scale), right.at(scale)
        if f1.ndim == 3:
            f1, f2 = f1.reshape((1,) + f1.shape), f2.reshape((1,) + f2.shape)
        raw_left = f1
        if li == 0 and init_disp is None and model.attention is not None:
            f1, f2 = model.attention(f1, f2)
        n, _, h, w = f1.shape
        if disp is None:
            disp = Tensor(np.zeros((n, 1, h, w), dtype=f1.dtype))
        elif disp.shape[-2:] != (h, w):
            disp = upsample_disparity(disp, h // disp.shape[-2])
            if cfg.detach_handoff:
                disp = disp.detach()
            if init_jitter is not None:
                amp, rng = init_jitter
                disp = disp + Tensor(rng.uniform(-amp, amp, (n, 1, 1, 1)).astype(disp.dtype))
        lookup = None
        if cfg.corr_type == "allpairs":
            mode = MODE_1D if (corr_mode or cfg.corr_mode) == MODE_1D else MODE_2D
            lookup = AllPairsLookup(f1, f2, mode, cfg.r, cfg.groups, cfg.memory_budget_bytes)
        run = run_rum(model.rum, (f1, f2), disp, n_it, model.rum.init_state(raw_left), r=cfg.r,
                      groups=cfg.groups, dilation=cfg.dilation, corr_mode=corr_mode or cfg.corr_mode,
                      schedule_first=cfg.schedule_first, use_offsets=cfg.use_offsets,
                      detach_sampling=cfg.detach_sampling, lookup=lookup, want_mask=li == len(scales) - 1)
        out.levels[scale] = run.predictions
        disp = run.predictions[-1]
    out.final = convex_upsample(disp, run.mask, factor=4)
    return out


def _check_divisible(h: int, w: int, n_stages: int) -> None:
    m = 16 * 2 ** (n_stages - 1)
    if h % m or w % m:
        raise InputError(f"{h}x{w} input is not divisible by {m} for {n_stages} stacked stages")


def stacked_inference(model: "StereoModel", left: Tensor, right: Tensor, n_stages: int = 1,
                      iters_per_level=None, corr_mode: str | None = None) -> Tensor:
    """Run the shared-weight network over a 2x image pyramid, coarse stage first.

    The coarsest stage runs the full cascade.  Each finer stage runs only its
    1/4-level RUM chain, initialised from the previous stage's full-resolution
    output resized to that level (values halved), then convex-upsamples.
    """
    if n_stages not in (1, 2, 3):
        raise InputError("n_stages must be 1, 2 or 3")
    left, right = ag.as_tensor(left), ag.as_tensor(right)
    squeeze = left.ndim == 3
    if squeeze:
        left, right = left.reshape((1,) + left.shape), right.reshape((1,) + right.shape)
    if left.shape != right.shape:
        raise InputError(f"left/right shapes differ: {left.shape} vs {right.shape}")
    h, w = left.shape[-2:]
    _check_divisible(h, w, n_stages)
    images = [(left, right)]
    for _ in range(n_stages - 1):
        l, r = images[-1]
        hh, ww = l.shape[-2:]
        images.append((ag.resize_bilinear(l, hh // 2, ww // 2), ag.resize_bilinear(r, hh // 2, ww // 2)))
    images.reverse()
    iters = list(iters_per_level or model.config.iters_per_level)
    result = None
    for k, (l, r) in enumerate(images):
        pyr = model.pyramids(l, r)
        if k == 0:
            result = cascade_forward(model, pyr, iters, corr_mode=corr_mode).final
        else:
            hh, ww = l.shape[-2:]
            init = ag.resize_bilinear(result, hh // 4, ww // 4) * 0.5
            result = cascade_forward(model, pyr, iters[-1:], scales=[1 / 4], init_disp=init,
                                     corr_mode=corr_mode).final
    return result.reshape(result.shape[1:]) if squeeze else result
