"""One scalar-valued probe per differentiable operation, for the gradient battery.

Each builder takes a seed and returns ``(fn, arrays)`` ready for ``gradcheck``.
Inputs are drawn so that no sampling coordinate or |pred - gt| sits on a kink.
"""
import numpy as np

from cascade_stereo import autograd as ag
from cascade_stereo.agcl import local_corr
from cascade_stereo.autograd import Tensor
from cascade_stereo.features import FeatureAttention, attention_block
from cascade_stereo.rum import RecurrentUpdateModule, RumState, convex_upsample, gru_step
from cascade_stereo.training import sequence_loss


def conv2d_case(seed):
    rng = np.random.default_rng(seed)
    x, w, b = rng.normal(size=(2, 3, 5, 6)), rng.normal(size=(2, 3, 3, 3)), rng.normal(size=2)
    g = Tensor(rng.normal(size=(2, 2, 3, 3)))
    return (lambda a, ww, bb: (ag.conv2d(a, ww, bb, stride=2, padding=1) * g).sum()), [x, w, b]


def grid_sample_case(seed):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=(2, 5, 6))
    shape = (3, 4)
    c = np.stack([rng.integers(-1, 6, shape) + rng.uniform(0.1, 0.9, shape),
                  rng.integers(-1, 5, shape) + rng.uniform(0.1, 0.9, shape)])
    g = Tensor(rng.normal(size=(2, 3, 4)))
    return (lambda ff, cc: (ag.grid_sample_bilinear(ff, cc) * g).sum()), [f, c]


def local_corr_case(seed):
    rng = np.random.default_rng(seed)
    c, h, w = 4, 3, 5
    f1, f2 = rng.normal(size=(1, c, h, w)), rng.normal(size=(1, c, h, w))
    disp = rng.integers(0, 3, (1, 1, h, w)) + rng.uniform(0.25, 0.75, (1, 1, h, w))
    offs = np.concatenate([rng.uniform(-0.1, 0.1, (1, 1, 9, h, w)), rng.uniform(0.25, 0.75, (1, 1, 9, h, w))], 1)
    g = Tensor(rng.normal(size=(1, 2 * 9, h, w)))
    mode = "2d" if seed % 2 else "1d"
    return (lambda a, b, d, o: (local_corr(a, b, d, o, mode=mode, groups=2).values * g).sum()), [f1, f2, disp, offs]


def gru_step_case(seed):
    rng = np.random.default_rng(seed)
    rum = RecurrentUpdateModule(4, hidden_ch=4, context_ch=4, corr_ch=9, seed=seed).astype(np.float64)
    h, w = 3, 3
    corr, disp = rng.normal(size=(1, 9, h, w)), rng.normal(size=(1, 1, h, w))
    hid, ctx = np.tanh(rng.normal(size=(1, 4, h, w))), rng.uniform(0.1, 1, (1, 4, h, w))
    gd, gh = Tensor(rng.normal(size=(1, 1, h, w))), Tensor(rng.normal(size=(1, 4, h, w)))
    gm = Tensor(rng.normal(size=(1, 144, h, w)))

    def fn(c, d, hh, cc):
        state, delta, mask = gru_step(rum, RumState(hh, cc), c, d, need_mask=True)
        return (delta * gd).sum() + (state.hidden * gh).sum() + (mask * gm).sum()

    return fn, [corr, disp, hid, ctx]


def convex_upsample_case(seed):
    rng = np.random.default_rng(seed)
    d, wts = rng.normal(size=(1, 1, 2, 3)), rng.normal(size=(1, 9 * 4, 2, 3))
    g = Tensor(rng.normal(size=(1, 1, 4, 6)))
    return (lambda a, b: (convex_upsample(a, b, factor=2) * g).sum()), [d, wts]


def sequence_loss_case(seed):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(0, 1, (1, 8, 12))
    mask = rng.uniform(size=(1, 8, 12)) > 0.3
    a, b = rng.uniform(2, 3, (1, 1, 2, 3)), rng.uniform(2, 3, (1, 1, 2, 3))
    c = rng.uniform(2, 3, (1, 1, 4, 6))
    d = rng.uniform(2, 3, (1, 1, 8, 12))
    return (lambda p, q, r, s: sequence_loss({0.25: [p, q], 0.5: [r], 1.0: [s]}, gt, mask)), [a, b, c, d]


def attention_block_case(seed):
    rng = np.random.default_rng(seed)
    attn = FeatureAttention(8, n_layers=2, heads=2, seed=seed).astype(np.float64)
    a, b = rng.normal(size=(1, 8, 2, 3)), rng.normal(size=(1, 8, 2, 3))
    ga, gb = Tensor(rng.normal(size=a.shape)), Tensor(rng.normal(size=b.shape))

    def fn(x, y):
        u, v = attention_block(attn, x, y)
        return (u * ga).sum() + (v * gb).sum()

    return fn, [a, b]


CASES = {
    "conv2d": conv2d_case,
    "grid_sample_bilinear": grid_sample_case,
    "local_corr": local_corr_case,
    "gru_step": gru_step_case,
    "convex_upsample": convex_upsample_case,
    "sequence_loss": sequence_loss_case,
    "attention_block": attention_block_case,
}
