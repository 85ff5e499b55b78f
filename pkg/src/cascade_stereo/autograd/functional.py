"""Image-shaped differentiable primitives (NCHW layout)."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import DimensionError, InputError
from .tensor import Tensor, as_tensor, make_result


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2D cross-correlation of ``x`` (N,C,H,W) with ``weight`` (O,C,kh,kw)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"conv2d expects 4D input and weight, got {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    o, cw, kh, kw = weight.shape
    if cw != c:
        raise DimensionError(f"conv2d: input has {c} channels, weight expects {cw}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError("conv2d kernels must have odd size")
    if stride < 1 or padding < 0:
        raise InputError("conv2d needs stride >= 1 and padding >= 0")
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (o,):
            raise DimensionError(f"conv2d bias must have shape ({o},), got {bias.shape}")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError("conv2d output would be empty")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    sh = (ho - 1) * stride + 1
    sw = (wo - 1) * stride + 1
    if kh == 1 and kw == 1:
        cols = xp[:, :, :sh:stride, :sw:stride].reshape(n, c, ho * wo)
    else:
        cols = np.empty((n, c, kh, kw, ho, wo), dtype=x.dtype)
        for i in range(kh):
            for j in range(kw):
                cols[:, :, i, j] = xp[:, :, i:i + sh:stride, j:j + sw:stride]
        cols = cols.reshape(n, c * kh * kw, ho * wo)
    wmat = weight.data.reshape(o, c * kh * kw)
    out = np.matmul(wmat, cols)
    if bias is not None:
        out += bias.data[:, None]
    out = out.reshape(n, o, ho, wo)

    def bw(g):
        gm = g.reshape(n, o, ho * wo)
        gx = gw = gb = None
        if weight.requires_grad:
            gw = np.einsum("nop,nkp->ok", gm, cols, optimize=True) if n > 1 else gm[0] @ cols[0].T
            gw = gw.reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = gm.sum(axis=(0, 2))
        if x.requires_grad:
            gcols = np.matmul(wmat.T, gm)
            if kh == 1 and kw == 1 and stride == 1:
                gxp = gcols.reshape(n, c, ho, wo)
            else:
                gxp = np.zeros(xp.shape, dtype=x.dtype)
                gp = gcols.reshape(n, c, kh, kw, ho, wo)
                for i in range(kh):
                    for j in range(kw):
                        gxp[:, :, i:i + sh:stride, j:j + sw:stride] += gp[:, :, i, j]
            gx = gxp[:, :, padding:padding + h, padding:padding + w] if padding else gxp
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_result(out, parents, bw, "conv2d")


def _bilinear_operators(x: np.ndarray, y: np.ndarray, h: int, w: int, dtype):
    """Sparse interpolation matrix plus its x/y derivative matrices.

    ``x``/``y`` are flat pixel coordinates of length P.  Corners outside the
    image get zero weight, which realises zero padding.
    """
    p = x.size
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = (x - x0).astype(dtype)
    fy = (y - y0).astype(dtype)
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    cx = np.stack([x0, x0 + 1, x0, x0 + 1], axis=1)
    cy = np.stack([y0, y0, y0 + 1, y0 + 1], axis=1)
    valid = ((cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)).astype(dtype)
    one = dtype(1)
    wts = np.stack([(one - fx) * (one - fy), fx * (one - fy), (one - fx) * fy, fx * fy], axis=1) * valid
    dwx = np.stack([-(one - fy), one - fy, -fy, fy], axis=1) * valid
    dwy = np.stack([-(one - fx), -fx, one - fx, fx], axis=1) * valid
    idx = (np.clip(cy, 0, h - 1) * w + np.clip(cx, 0, w - 1)).reshape(-1)
    indptr = np.arange(0, 4 * p + 1, 4)

    def mat(vals):
        return sp.csr_matrix((vals.reshape(-1), idx, indptr), shape=(p, h * w))

    return mat(wts), mat(dwx), mat(dwy)


def grid_sample(feat: Tensor, coords: Tensor) -> Tensor:
    """Batched bilinear sampling at pixel coordinates.

    ``feat`` is (N,C,H,W); ``coords`` is (N,2,*S) holding (x, y) in pixels.
    Returns (N,C,*S).  Samples outside the image read zeros.
    """
    feat, coords = as_tensor(feat), as_tensor(coords)
    if feat.ndim != 4 or coords.ndim < 3 or coords.shape[1] != 2 or coords.shape[0] != feat.shape[0]:
        raise DimensionError(f"grid_sample: feat {feat.shape} and coords {coords.shape} are incompatible")
    if not np.isfinite(coords.data).all():
        raise InputError("grid_sample: coordinates must be finite")
    n, c, h, w = feat.shape
    spatial = coords.shape[2:]
    p = int(np.prod(spatial))
    dtype = feat.dtype.type
    cflat = coords.data.reshape(n, 2, p)
    out = np.empty((n, c, p), dtype=feat.dtype)
    ops = []
    ftrans = []
    for b in range(n):
        s, sx, sy = _bilinear_operators(cflat[b, 0], cflat[b, 1], h, w, dtype)
        ft = np.ascontiguousarray(feat.data[b].reshape(c, h * w).T)
        out[b] = (s @ ft).T
        ops.append((s, sx, sy))
        ftrans.append(ft)

    def bw(g):
        g = g.reshape(n, c, p)
        gf = np.zeros(feat.shape, dtype=feat.dtype) if feat.requires_grad else None
        gc = np.zeros((n, 2, p), dtype=coords.dtype) if coords.requires_grad else None
        for b in range(n):
            s, sx, sy = ops[b]
            gt = np.ascontiguousarray(g[b].T)  # (P, C)
            if gf is not None:
                gf[b] = (s.T @ gt).T.reshape(c, h, w)
            if gc is not None:
                gc[b, 0] = np.einsum("pc,pc->p", sx @ ftrans[b], gt)
                gc[b, 1] = np.einsum("pc,pc->p", sy @ ftrans[b], gt)
        return gf, (gc.reshape(coords.shape) if gc is not None else None)

    return make_result(out.reshape((n, c) + spatial), (feat, coords), bw, "grid_sample")


def grid_sample_bilinear(feat: Tensor, coords: Tensor) -> Tensor:
    """Unbatched form: ``feat`` (C,H,W) sampled at ``coords`` (2,H',W') -> (C,H',W')."""
    feat, coords = as_tensor(feat), as_tensor(coords)
    if feat.ndim != 3 or coords.ndim != 3 or coords.shape[0] != 2:
        raise DimensionError(f"grid_sample_bilinear: feat {feat.shape}, coords {coords.shape}")
    out = grid_sample(feat.reshape((1,) + feat.shape), coords.reshape((1,) + coords.shape))
    return out.reshape(out.shape[1:])


def _resize_matrix(n_in: int, n_out: int, dtype) -> np.ndarray:
    """Row-stochastic linear interpolation matrix, pixel-centre aligned, edge clamped."""
    m = np.zeros((n_out, n_in), dtype=np.float64)
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    f = src - i0
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1.0 - f)
    np.add.at(m, (rows, i1), f)
    return m.astype(dtype)


def resize_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resize of the last two axes to (out_h, out_w)."""
    x = as_tensor(x)
    h, w = x.shape[-2:]
    if (h, w) == (out_h, out_w):
        return x
    ry = _resize_matrix(h, out_h, x.dtype)
    rx = _resize_matrix(w, out_w, x.dtype)
    out = ry @ x.data @ rx.T

    def bw(g):
        return (ry.T @ g @ rx,)

    return make_result(out, (x,), bw, "resize_bilinear")


def avg_pool2d(x: Tensor, k: int) -> Tensor:
    """Non-overlapping k x k average pooling; spatial dims must be divisible by k."""
    x = as_tensor(x)
    *lead, h, w = x.shape
    if h % k or w % k:
        raise DimensionError(f"avg_pool2d: {h}x{w} not divisible by {k}")
    out = x.data.reshape(*lead, h // k, k, w // k, k).mean(axis=(-3, -1))

    def bw(g):
        g = np.repeat(np.repeat(g, k, axis=-2), k, axis=-1) / (k * k)
        return (g.astype(x.dtype),)

    return make_result(out, (x,), bw, "avg_pool2d")


def instance_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-sample, per-channel standardisation over H and W (no affine part)."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"instance_norm expects NCHW input, got {x.shape}")
    xd = x.data
    centred = xd - xd.mean(axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt((centred * centred).mean(axis=(2, 3), keepdims=True) + eps)
    y = (centred * inv).astype(xd.dtype)

    def bw(g):
        gm = g.mean(axis=(2, 3), keepdims=True)
        gy = (g * y).mean(axis=(2, 3), keepdims=True)
        return ((g - gm - y * gy) * inv).astype(xd.dtype),

    return make_result(y, (x,), bw, "instance_norm")
