import numpy as np
import pytest

from cascade_stereo import autograd as ag
from cascade_stereo.autograd import Tensor
from cascade_stereo.errors import ConfigError, DimensionError, InputError
from cascade_stereo.features import (
    FeatureAttention, PyramidEncoder, attention_block, extract_pyramid, linear_attention, sinusoidal_encoding,
)
from oracles import assert_grads


def test_pyramid_shapes_and_shared_weights(rng):
    enc = PyramidEncoder((16, 16, 16), stem_channels=8)
    img = rng.uniform(0, 1, (3, 64, 96)).astype(np.float32)
    left = extract_pyramid(enc, img, "left")
    assert [lv.shape for lv in left.levels] == [(16, 16, 24), (16, 8, 12), (16, 4, 6)]
    again = extract_pyramid(enc, img, "right")
    for a, b in zip(left.levels, again.levels):
        np.testing.assert_array_equal(a.data, b.data)
    assert left.at(1 / 16).shape == (16, 4, 6)


def test_pyramid_rejects_bad_sizes():
    enc = PyramidEncoder((8, 8, 8), stem_channels=8)
    with pytest.raises(InputError):
        extract_pyramid(enc, np.zeros((3, 60, 96), dtype=np.float32))
    with pytest.raises(InputError):
        extract_pyramid(enc, np.zeros((1, 64, 96), dtype=np.float32))
    with pytest.raises(ConfigError):
        PyramidEncoder((8, 8, 8), norm="batch")


def test_positional_encoding_values():
    pe = sinusoidal_encoding(8, 3, 5, np.float64)
    assert pe.shape == (8, 3, 5)
    np.testing.assert_allclose(pe[0], np.sin(np.arange(5.0))[None].repeat(3, 0))
    np.testing.assert_allclose(pe[3], np.cos(np.arange(3.0))[:, None].repeat(5, 1))
    # distinct positions get distinct codes
    flat = pe.reshape(8, -1).T
    assert len({tuple(np.round(r, 9)) for r in flat}) == 15
    with pytest.raises(DimensionError):
        sinusoidal_encoding(6, 2, 2)


def test_linear_attention_matches_quadratic_form(rng):
    q, k, v = rng.normal(size=(2, 5, 4)), rng.normal(size=(2, 7, 4)), rng.normal(size=(2, 7, 3))
    with ag.default_dtype(np.float64):
        out = linear_attention(Tensor(q), Tensor(k), Tensor(v)).data

    def phi(x):
        return np.where(x > 0, x + 1.0, np.exp(x))

    sim = np.einsum("bld,bsd->bls", phi(q), phi(k))
    ref = np.einsum("bls,bsv->blv", sim, v) / (sim.sum(-1, keepdims=True) + 1e-6)
    np.testing.assert_allclose(out, ref, rtol=1e-10)


def test_attention_swap_equivariance(rng):
    attn = FeatureAttention(8, n_layers=2, heads=2, seed=3).astype(np.float64)
    a, b = rng.normal(size=(8, 3, 4)), rng.normal(size=(8, 3, 4))
    with ag.default_dtype(np.float64):
        la, lb = attention_block(attn, Tensor(a), Tensor(b))
        ra, rb = attention_block(attn, Tensor(b), Tensor(a))
    np.testing.assert_allclose(la.data, rb.data, rtol=1e-12)
    np.testing.assert_allclose(lb.data, ra.data, rtol=1e-12)


def test_attention_shape_mismatch(rng):
    attn = FeatureAttention(8, n_layers=2, heads=2)
    with pytest.raises(InputError):
        attention_block(attn, Tensor(np.zeros((8, 3, 4))), Tensor(np.zeros((8, 3, 5))))


@pytest.mark.parametrize("seed", range(5))
def test_attention_block_grads(seed):
    rng = np.random.default_rng(seed)
    attn = FeatureAttention(8, n_layers=2, heads=2, seed=seed).astype(np.float64)
    a, b = rng.normal(size=(1, 8, 2, 3)), rng.normal(size=(1, 8, 2, 3))
    ga, gb = Tensor(rng.normal(size=a.shape)), Tensor(rng.normal(size=b.shape))

    def fn(x, y):
        u, v = attention_block(attn, x, y)
        return (u * ga).sum() + (v * gb).sum()

    assert_grads(fn, [a, b])


def test_encoder_grads_reach_every_parameter(rng):
    enc = PyramidEncoder((8, 8, 8), stem_channels=4)
    img = Tensor(rng.uniform(0, 1, (1, 3, 32, 32)).astype(np.float32))
    loss = sum(((lv * lv).sum() for lv in enc(img)), Tensor(np.float32(0)))
    loss.backward()
    for name, p in enc.named_parameters():
        assert p.grad is not None and np.abs(p.grad).sum() > 0, name
