"""Adaptive group correlation: local 1D/2D windows with learned offsets.

Sign convention: window entry ``d`` tests the disparity hypothesis
``disp + f(d) + dx``, i.e. F2 is read at ``x - (disp + f(d) + dx)`` and
``y + g(d) + dy``.  A right view whose content sits ``s`` pixels to the left
of the left view therefore peaks at ``f(d) = s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Conv2d, Module, Tensor
from .errors import ConfigError, InputError, ResourceError

MODE_1D = "1d"
MODE_2D = "2d"


@dataclass
class CorrVolume:
    values: Tensor  # (N, G*D, H, W) or (G*D, H, W)
    D: int
    groups: int
    mode: str
    r: int
    dilation: int


def window_size(r: int) -> int:
    return 2 * r + 1


def grid_side(r: int) -> int:
    d = window_size(r)
    k = math.isqrt(d)
    if k * k != d:
        raise ConfigError(f"2D search needs 2r+1 to be a perfect square, got r={r}")
    return k


def window_offsets(mode: str, r: int, dilation: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Fixed horizontal (f) and vertical (g) offsets of the D correlation pairs."""
    if mode == MODE_1D:
        f = np.arange(-r, r + 1, dtype=np.float64)
        return f, np.zeros_like(f)
    if mode == MODE_2D:
        k = grid_side(r)
        half = k // 2
        gy, gx = np.meshgrid(np.arange(k) - half, np.arange(k) - half, indexing="ij")
        return (gx.reshape(-1) * dilation).astype(np.float64), (gy.reshape(-1) * dilation).astype(np.float64)
    raise ConfigError(f"unknown correlation mode {mode!r}")


def alternate_schedule(iteration_index: int, first: str = MODE_2D) -> str:
    """Strict 2D/1D alternation; ``first`` picks the mode of iteration 0."""
    other = MODE_1D if first == MODE_2D else MODE_2D
    return first if iteration_index % 2 == 0 else other


def _batched(*tensors):
    squeeze = tensors[0].ndim == 3
    if squeeze:
        tensors = tuple(None if t is None else t.reshape((1,) + t.shape) for t in tensors)
    return squeeze, tensors


def group_correlation(f1: Tensor, sampled: Tensor, groups: int) -> Tensor:
    """Per-group channel mean of f1 * sampled.  f1 (N,C,H,W), sampled (N,C,D,H,W)."""
    n, c, d, h, w = sampled.shape
    cg = c // groups
    prod = f1.reshape(n, groups, cg, 1, h, w) * sampled.reshape(n, groups, cg, d, h, w)
    return prod.mean(axis=2).reshape(n, groups * d, h, w)


def sample_window(f2: Tensor, disp: Tensor, offsets: Tensor | None, mode: str, r: int,
                  dilation: int) -> Tensor:
    """Bilinear samples of f2 at every window position: (N,C,D,H,W)."""
    n, _, h, w = f2.shape
    fo, go = window_offsets(mode, r, dilation)
    dcount = fo.size
    dtype = f2.dtype
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    base_x = (xs[None] - fo[:, None, None]).astype(dtype)[None, None]  # (1,1,D,H,W)
    base_y = (ys[None] + go[:, None, None]).astype(dtype)[None, None]
    px = base_x - disp.reshape(n, 1, 1, h, w)
    py = Tensor(np.broadcast_to(base_y, (n, 1, dcount, h, w)).copy())
    if offsets is not None:
        dx, dy = ag.split(offsets, [1, 1], axis=1)
        px = px - dx
        py = py + dy
    coords = ag.concat([px, py], axis=1)
    return ag.grid_sample(f2, coords)


def local_corr(F1, F2, current_disp, offsets=None, mode: str = MODE_1D, r: int = 4, dilation: int = 1,
               groups: int = 1) -> CorrVolume:
    """Local group-wise correlation with optional learned per-pair offsets.

    Shapes (batch axis optional): F1, F2 (N,C,H,W); current_disp (N,1,H,W);
    offsets (N,2,D,H,W) with D = 2r+1; result values (N,G*D,H,W).
    """
    F1, F2, current_disp = ag.as_tensor(F1), ag.as_tensor(F2), ag.as_tensor(current_disp)
    if offsets is not None:
        offsets = ag.as_tensor(offsets)
    if F1.shape != F2.shape:
        raise InputError(f"feature shapes differ: {F1.shape} vs {F2.shape}")
    c = F1.shape[-3]
    if groups < 1 or c % groups:
        raise ConfigError(f"{c} channels cannot be split into {groups} groups")
    squeeze, (F1, F2, current_disp) = _batched(F1, F2, current_disp)
    if offsets is not None and squeeze:
        offsets = offsets.reshape((1,) + offsets.shape)
    sampled = sample_window(F2, current_disp, offsets, mode, r, dilation)
    vol = group_correlation(F1, sampled, groups)
    if squeeze:
        vol = vol.reshape(vol.shape[1:])
    return CorrVolume(vol, window_size(r), groups, mode, r, dilation)


def fixed_window_corr(F1: np.ndarray, F2: np.ndarray, disp: np.ndarray, mode: str = MODE_1D, r: int = 4,
                      dilation: int = 1, groups: int = 1) -> np.ndarray:
    """Reference fixed-window correlation in plain numpy (no offsets, no autograd).

    Integer target positions are read by direct indexing; fractional ones by
    explicit bilinear weights.  Out-of-image reads are zero.
    """
    F1 = np.asarray(F1)
    F2 = np.asarray(F2)
    squeeze = F1.ndim == 3
    if squeeze:
        F1, F2, disp = F1[None], F2[None], np.asarray(disp)[None]
    n, c, h, w = F1.shape
    fo, go = window_offsets(mode, r, dilation)
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    sampled = np.zeros((n, c, fo.size, h, w), dtype=F2.dtype)
    for b in range(n):
        db = np.asarray(disp[b, 0], dtype=np.float64)
        for i, (f, g) in enumerate(zip(fo, go)):
            tx = xs - (db + f)
            ty = (ys + g).astype(np.int64)
            if np.all(tx == np.round(tx)):
                ix = tx.astype(np.int64)
                ok = (ix >= 0) & (ix < w) & (ty >= 0) & (ty < h)
                vals = F2[b][:, np.clip(ty, 0, h - 1), np.clip(ix, 0, w - 1)]
                sampled[b, :, i] = np.where(ok, vals, 0)
            else:
                x0 = np.floor(tx).astype(np.int64)
                a = tx - x0
                acc = np.zeros((c, h, w))
                for xi, wt in ((x0, 1 - a), (x0 + 1, a)):
                    ok = (xi >= 0) & (xi < w) & (ty >= 0) & (ty < h)
                    vals = F2[b][:, np.clip(ty, 0, h - 1), np.clip(xi, 0, w - 1)]
                    acc += np.where(ok, vals * wt, 0)
                sampled[b, :, i] = acc
    cg = c // groups
    prod = F1.reshape(n, groups, cg, 1, h, w) * sampled.reshape(n, groups, cg, fo.size, h, w)
    vol = prod.mean(axis=2).reshape(n, groups * fo.size, h, w)
    return vol[0] if squeeze else vol


class OffsetHead(Module):
    """3x3 conv from [hidden, context] to per-pair (dx, dy), hard-clipped to +-bound."""

    def __init__(self, hidden_ch: int, context_ch: int, r: int, rng: np.random.Generator, bound: float = 2.0):
        self.D = window_size(r)
        self.bound = bound
        self.conv = Conv2d(hidden_ch + context_ch, 2 * self.D, 3, rng, gain=0.01)

    def forward(self, hidden: Tensor, context: Tensor) -> Tensor:
        out = self.conv(ag.concat([hidden, context], axis=1))
        n, _, h, w = out.shape
        return ag.clip(out, -self.bound, self.bound).reshape(n, 2, self.D, h, w)


def predict_offsets(head: OffsetHead, hidden_state: Tensor, context: Tensor) -> Tensor:
    squeeze = hidden_state.ndim == 3
    if squeeze:
        hidden_state = hidden_state.reshape((1,) + hidden_state.shape)
        context = context.reshape((1,) + context.shape)
    out = head(hidden_state, context)
    return out.reshape(out.shape[1:]) if squeeze else out


# ------------------------------------------------------------- all-pairs
def volume_scalars_per_pixel(kind: str, h: int, w: int, D: int = 9, groups: int = 1) -> int:
    """Stored correlation scalars per pixel for a volume type."""
    if kind == "allpairs_1d":
        return w
    if kind == "allpairs_2d":
        return h * w
    if kind == "local":
        return D * groups
    raise ConfigError(f"unknown volume kind {kind!r}")


def allpairs_corr(F1, F2, mode: str = MODE_1D, budget_bytes: int = 256 * 2 ** 20) -> Tensor:
    """Channel-mean dot products between every pixel of F1 and candidate pixels of F2.

    1D: (N,H,W,W) over pixels on the same row; 2D: (N,H,W,H,W) over all pixels.
    """
    F1, F2 = ag.as_tensor(F1), ag.as_tensor(F2)
    squeeze, (F1, F2) = _batched(F1, F2)
    n, c, h, w = F1.shape
    kind = "allpairs_1d" if mode == MODE_1D else "allpairs_2d"
    nbytes = n * h * w * volume_scalars_per_pixel(kind, h, w) * F1.dtype.itemsize
    if nbytes > budget_bytes:
        raise ResourceError(f"{mode} all-pairs volume needs {nbytes} bytes, budget is {budget_bytes}")
    if mode == MODE_1D:
        a = ag.transpose(F1, (0, 2, 3, 1))  # N,H,W,C
        b = ag.transpose(F2, (0, 2, 1, 3))  # N,H,C,W
        vol = (a @ b) * (1.0 / c)
    else:
        a = ag.transpose(F1.reshape(n, c, h * w), (0, 2, 1))
        vol = ((a @ F2.reshape(n, c, h * w)) * (1.0 / c)).reshape(n, h, w, h, w)
    return vol.reshape(vol.shape[1:]) if squeeze else vol


def _pool_last(x: Tensor, axes: int) -> Tensor:
    """Halve the last ``axes`` axes by 2-averaging, dropping an odd trailing element."""
    sl = [slice(None)] * x.ndim
    for k in range(1, axes + 1):
        size = x.shape[-k]
        if size >= 2:
            sl[-k] = slice(0, size - size % 2)
    x = x[tuple(sl)] if any(s != slice(None) for s in sl) else x
    shape = list(x.shape)
    if axes == 1:
        if shape[-1] < 2:
            return x
        return x.reshape(*shape[:-1], shape[-1] // 2, 2).mean(axis=-1)
    if shape[-1] < 2 or shape[-2] < 2:
        return x
    return x.reshape(*shape[:-2], shape[-2] // 2, 2, shape[-1] // 2, 2).mean(axis=(-3, -1))


class AllPairsLookup:
    """RAFT-style pooled all-pairs pyramid with a D-entry window read per level.

    Used only as the ablation baseline; each of ``levels`` pyramid levels
    contributes D channels, so ``levels`` plays the role of ``groups``.
    """

    def __init__(self, F1: Tensor, F2: Tensor, mode: str, r: int, levels: int, budget_bytes: int):
        self.mode, self.r = mode, r
        vol = allpairs_corr(F1, F2, mode, budget_bytes)
        n, h, w = vol.shape[:3]
        self.n, self.h, self.w = n, h, w
        if mode == MODE_1D:
            base = vol.reshape(1, 1, n * h * w, w)
        else:
            base = vol.reshape(n * h * w, h, w)
        self.pyramid = [base]
        for _ in range(levels - 1):
            self.pyramid.append(_pool_last(self.pyramid[-1], 1 if mode == MODE_1D else 2))

    def __call__(self, disp: Tensor) -> Tensor:
        n, h, w = self.n, self.h, self.w
        fo, go = window_offsets(self.mode, self.r)
        dcount = fo.size
        ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
        centre = xs[None, None] - disp.data.reshape(n, 1, h, w).astype(np.float64)
        pixel = np.arange(n * h * w, dtype=np.float64).reshape(n, 1, h, w)
        out = []
        for i, vol in enumerate(self.pyramid):
            scale = 2.0 ** i
            px = (centre + 0.5) / scale - 0.5 - fo.reshape(1, dcount, 1, 1)
            if self.mode == MODE_1D:
                rows = np.broadcast_to(pixel, px.shape)
                coords = np.stack([px, rows], axis=0).reshape(1, 2, -1)
                s = ag.grid_sample(vol, Tensor(coords.astype(vol.dtype)))
            else:
                hv, wv = vol.shape[-2:]
                py = (ys[None, None] + 0.5) / scale - 0.5 + go.reshape(1, dcount, 1, 1)
                py = np.clip(py, -1.0, hv)  # stay inside this pixel's zero-bordered block
                tall = ag.pad2d(vol.reshape(n * h * w, 1, hv, wv), 1).reshape(1, 1, n * h * w * (hv + 2), wv + 2)
                coords = np.stack([px + 1.0, py + 1.0 + pixel * (hv + 2)], axis=0).reshape(1, 2, -1)
                s = ag.grid_sample(tall, Tensor(coords.astype(vol.dtype)))
            out.append(s.reshape(n, dcount, h, w))
        return ag.concat(out, axis=1)
