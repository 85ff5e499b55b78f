"""Shared-weight feature pyramid, positional encoding and linear attention."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Conv2d, Module, Parameter, Tensor
from .errors import ConfigError, DimensionError, InputError

LEVEL_SCALES = (1 / 4, 1 / 8, 1 / 16)


@dataclass
class FeaturePyramid:
    """Feature maps at 1/4, 1/8 and 1/16 of the input, finest first."""

    levels: tuple[Tensor, Tensor, Tensor]
    source: str = "left"

    @property
    def scales(self) -> tuple[float, ...]:
        return LEVEL_SCALES

    def at(self, scale: float) -> Tensor:
        return self.levels[LEVEL_SCALES.index(scale)]


class ResidualBlock(Module):
    def __init__(self, ch: int, rng: np.random.Generator):
        self.conv1 = Conv2d(ch, ch, 3, rng)
        self.conv2 = Conv2d(ch, ch, 3, rng, gain=0.5)

    def forward(self, x: Tensor) -> Tensor:
        return ag.relu(x + self.conv2(ag.relu(self.conv1(x))))


class PyramidEncoder(Module):
    """Stride-2 stem, then three stride-2 stages each followed by a residual block.

    Produces features at 1/4, 1/8 and 1/16 resolution with ``channels[i]``
    channels at level ``i`` (finest first).  With ``norm="instance"`` every
    strided conv is instance-normalised before its ReLU.
    """

    def __init__(self, channels=(64, 64, 64), stem_channels: int = 32, seed: int = 0, norm: str = "instance"):
        if norm not in ("instance", "none"):
            raise ConfigError(f"encoder norm must be 'instance' or 'none', got {norm!r}")
        rng = np.random.default_rng(seed)
        self.norm = norm
        self.channels = tuple(channels)
        c4, c8, c16 = self.channels
        self.stem = Conv2d(3, stem_channels, 3, rng, stride=2)
        self.down4 = Conv2d(stem_channels, c4, 3, rng, stride=2)
        self.res4 = ResidualBlock(c4, rng)
        self.down8 = Conv2d(c4, c8, 3, rng, stride=2)
        self.res8 = ResidualBlock(c8, rng)
        self.down16 = Conv2d(c8, c16, 3, rng, stride=2)
        self.res16 = ResidualBlock(c16, rng)
        self.out4 = Conv2d(c4, c4, 1, rng, gain=1.0)
        self.out8 = Conv2d(c8, c8, 1, rng, gain=1.0)
        self.out16 = Conv2d(c16, c16, 1, rng, gain=1.0)

    def _act(self, x: Tensor) -> Tensor:
        return ag.relu(ag.instance_norm(x) if self.norm == "instance" else x)

    def forward(self, images: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        x = self._act(self.stem(images * 2.0 - 1.0))
        x4 = self.res4(self._act(self.down4(x)))
        x8 = self.res8(self._act(self.down8(x4)))
        x16 = self.res16(self._act(self.down16(x8)))
        return self.out4(x4), self.out8(x8), self.out16(x16)


def extract_pyramid(encoder: PyramidEncoder, image: Tensor, source: str = "left") -> FeaturePyramid:
    """Encode one image (3,H,W) or a batch (N,3,H,W)."""
    image = ag.as_tensor(image)
    batched = image.ndim == 4
    if not batched:
        image = image.reshape((1,) + image.shape)
    h, w = image.shape[-2:]
    if image.shape[1] != 3:
        raise InputError(f"expected 3-channel images, got {image.shape}")
    if h % 16 or w % 16:
        raise InputError(f"image size {h}x{w} must be divisible by 16")
    levels = encoder(image)
    if not batched:
        levels = tuple(lv.reshape(lv.shape[1:]) for lv in levels)
    return FeaturePyramid(levels=levels, source=source)


# ------------------------------------------------------------ positional code
def sinusoidal_encoding(channels: int, h: int, w: int, dtype=np.float32) -> np.ndarray:
    """Fixed 2D sinusoidal code (C,H,W): channel groups of sin/cos over x and y."""
    if channels % 4:
        raise DimensionError("positional encoding needs channels divisible by 4")
    n_freq = channels // 4
    freqs = np.exp(np.arange(n_freq) * (-np.log(10000.0) / n_freq))
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    pe = np.zeros((channels, h, w))
    pe[0::4] = np.sin(xs[None] * freqs[:, None, None])
    pe[1::4] = np.cos(xs[None] * freqs[:, None, None])
    pe[2::4] = np.sin(ys[None] * freqs[:, None, None])
    pe[3::4] = np.cos(ys[None] * freqs[:, None, None])
    return pe.astype(dtype)


def positional_encoding(feat: Tensor) -> Tensor:
    feat = ag.as_tensor(feat)
    c, h, w = feat.shape[-3:]
    return feat + sinusoidal_encoding(c, h, w, feat.dtype.type)


# -------------------------------------------------------------- attention
def elu_feature_map(x: Tensor) -> Tensor:
    return ag.elu(x) + 1.0


def linear_attention(q: Tensor, k: Tensor, v: Tensor, eps: float = 1e-6) -> Tensor:
    """Kernelised attention, linear in token count.

    ``q`` is (..., L, d), ``k`` (..., S, d), ``v`` (..., S, dv); returns (..., L, dv)
    with out_i = sum_j phi(q_i).phi(k_j) v_j / sum_j phi(q_i).phi(k_j),
    phi(x) = elu(x) + 1.
    """
    qf = elu_feature_map(q)
    kf = elu_feature_map(k)
    kt = ag.transpose(kf, tuple(range(kf.ndim - 2)) + (kf.ndim - 1, kf.ndim - 2))
    kv = kt @ v
    num = qf @ kv
    ksum = kf.sum(axis=-2, keepdims=True)
    den = qf @ ag.transpose(ksum, tuple(range(ksum.ndim - 2)) + (ksum.ndim - 1, ksum.ndim - 2))
    return num / (den + eps)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, gain: float = 1.0):
        bound = np.sqrt(3.0 * gain / n_in)
        self.weight = Parameter(rng.uniform(-bound, bound, size=(n_in, n_out)).astype(np.float32))
        self.bias = Parameter(np.zeros(n_out, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class AttentionLayer(Module):
    """One message-passing layer: multi-head linear attention plus a residual MLP."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads:
            raise DimensionError(f"attention dim {dim} not divisible by {heads} heads")
        self.dim, self.heads = dim, heads
        self.q = Linear(dim, dim, rng)
        self.k = Linear(dim, dim, rng)
        self.v = Linear(dim, dim, rng)
        self.merge = Linear(dim, dim, rng)
        self.mlp1 = Linear(2 * dim, 2 * dim, rng, gain=2.0)
        self.mlp2 = Linear(2 * dim, dim, rng, gain=0.25)

    def _heads(self, x: Tensor) -> Tensor:
        n, length, _ = x.shape
        return ag.transpose(x.reshape(n, length, self.heads, self.dim // self.heads), (0, 2, 1, 3))

    def forward(self, x: Tensor, source: Tensor) -> Tensor:
        n, length, _ = x.shape
        msg = linear_attention(self._heads(self.q(x)), self._heads(self.k(source)), self._heads(self.v(source)))
        msg = ag.transpose(msg, (0, 2, 1, 3)).reshape(n, length, self.dim)
        msg = self.merge(msg)
        return x + self.mlp2(ag.relu(self.mlp1(ag.concat([x, msg], axis=-1))))


class FeatureAttention(Module):
    """Alternating self/cross attention over two feature maps of equal shape."""

    def __init__(self, dim: int, n_layers: int = 2, heads: int = 4, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.layers = [AttentionLayer(dim, heads, rng) for _ in range(n_layers)]
        self.kinds = ["self" if i % 2 == 0 else "cross" for i in range(n_layers)]

    def forward(self, f_left: Tensor, f_right: Tensor) -> tuple[Tensor, Tensor]:
        return attention_block(self, f_left, f_right)


def _to_tokens(f: Tensor) -> Tensor:
    n, c, h, w = f.shape
    return ag.transpose(f.reshape(n, c, h * w), (0, 2, 1))


def _from_tokens(t: Tensor, shape) -> Tensor:
    n, c, h, w = shape
    return ag.transpose(t, (0, 2, 1)).reshape(n, c, h, w)


def attention_block(attn: FeatureAttention, f_left: Tensor, f_right: Tensor,
                    n_layers: int | None = None) -> tuple[Tensor, Tensor]:
    """Positional encoding, then ``n_layers`` rounds alternating self and cross attention.

    Accepts (C,H,W) or (N,C,H,W).  Both maps are updated simultaneously in
    cross rounds, so swapping the inputs swaps the outputs.
    """
    f_left, f_right = ag.as_tensor(f_left), ag.as_tensor(f_right)
    if f_left.shape != f_right.shape:
        raise InputError(f"attention inputs differ in shape: {f_left.shape} vs {f_right.shape}")
    squeeze = f_left.ndim == 3
    if squeeze:
        f_left = f_left.reshape((1,) + f_left.shape)
        f_right = f_right.reshape((1,) + f_right.shape)
    shape = f_left.shape
    a = _to_tokens(positional_encoding(f_left))
    b = _to_tokens(positional_encoding(f_right))
    layers = attn.layers if n_layers is None else attn.layers[:n_layers]
    for layer, kind in zip(layers, attn.kinds):
        if kind == "self":
            a, b = layer(a, a), layer(b, b)
        else:
            a, b = layer(a, b), layer(b, a)
    out_l, out_r = _from_tokens(a, shape), _from_tokens(b, shape)
    if squeeze:
        out_l, out_r = out_l.reshape(shape[1:]), out_r.reshape(shape[1:])
    return out_l, out_r
