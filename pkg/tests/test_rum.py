import numpy as np
import pytest

from cascade_stereo import autograd as ag
from cascade_stereo.autograd import Tensor
from cascade_stereo.errors import InputError
from cascade_stereo.model import StereoModel
from cascade_stereo.rum import (
    DisparityField, RecurrentUpdateModule, RumState, cascade_forward, convex_upsample, gru_step, run_rum,
    stacked_inference, upsample_disparity,
)
from oracles import assert_grads
from toys import tiny_model


@pytest.mark.parametrize("seed", range(5))
def test_gru_step_grads(seed):
    rng = np.random.default_rng(seed)
    rum = RecurrentUpdateModule(4, hidden_ch=4, context_ch=4, corr_ch=9, seed=seed).astype(np.float64)
    h, w = 3, 3
    corr, disp = rng.normal(size=(1, 9, h, w)), rng.normal(size=(1, 1, h, w))
    hid, ctx = np.tanh(rng.normal(size=(1, 4, h, w))), rng.uniform(0.1, 1, (1, 4, h, w))
    gd, gh = Tensor(rng.normal(size=(1, 1, h, w))), Tensor(rng.normal(size=(1, 4, h, w)))
    gm = Tensor(rng.normal(size=(1, 144, h, w)))

    def fn(c, d, hh, cc):
        st, delta, mask = gru_step(rum, RumState(hh, cc), c, d, need_mask=True)
        return (delta * gd).sum() + (st.hidden * gh).sum() + (mask * gm).sum()

    assert_grads(fn, [corr, disp, hid, ctx])


@pytest.mark.parametrize("seed", range(5))
def test_convex_upsample_grads(seed):
    rng = np.random.default_rng(seed)
    d, wts = rng.normal(size=(1, 1, 2, 3)), rng.normal(size=(1, 9 * 4, 2, 3))
    g = Tensor(rng.normal(size=(1, 1, 4, 6)))
    assert_grads(lambda a, b: (convex_upsample(a, b, factor=2) * g).sum(), [d, wts])


def test_convex_upsample_one_hot_centre_is_nearest(rng):
    d = rng.normal(size=(1, 1, 3, 4))
    logits = np.full((1, 9, 4, 4, 3, 4), -1e3)
    logits[:, 4] = 0.0
    with ag.default_dtype(np.float64):
        up = convex_upsample(Tensor(d), Tensor(logits.reshape(1, 144, 3, 4)), factor=4).data
    np.testing.assert_allclose(up[0, 0], np.kron(d[0, 0], np.ones((4, 4))) * 4, atol=1e-9)


def test_convex_upsample_constant_field(rng):
    d = np.full((1, 1, 3, 4), 2.5)
    with ag.default_dtype(np.float64):
        up = convex_upsample(Tensor(d), Tensor(rng.normal(size=(1, 144, 3, 4))), factor=4).data
    np.testing.assert_allclose(up, 10.0, rtol=1e-12)


def test_upsample_disparity_doubles_values():
    out = upsample_disparity(Tensor(np.full((1, 1, 2, 3), 1.5, dtype=np.float32)))
    assert out.shape == (1, 1, 4, 6)
    np.testing.assert_allclose(out.data, 3.0)


def test_disparity_field_rescale():
    f = DisparityField(np.full((1, 4, 6), 2.0, dtype=np.float32), scale=0.25).rescaled(1.0)
    assert f.values.shape == (1, 16, 24) and f.scale == 1.0
    np.testing.assert_allclose(f.values, 8.0)


def test_gru_step_rejects_mismatched_sizes(rng):
    rum = RecurrentUpdateModule(4, hidden_ch=4, context_ch=4, corr_ch=9)
    st = RumState(Tensor(np.zeros((1, 4, 3, 3), np.float32)), Tensor(np.zeros((1, 4, 3, 3), np.float32)))
    with pytest.raises(InputError):
        gru_step(rum, st, np.zeros((1, 9, 3, 4), np.float32), np.zeros((1, 1, 3, 3), np.float32))


def test_run_rum_gradient_reaches_initial_disparity(rng):
    rum = RecurrentUpdateModule(4, hidden_ch=4, context_ch=4, corr_ch=9)
    f1 = Tensor(rng.normal(size=(1, 4, 4, 6)).astype(np.float32))
    f2 = Tensor(rng.normal(size=(1, 4, 4, 6)).astype(np.float32))
    init = Tensor(rng.uniform(0, 2, (1, 1, 4, 6)).astype(np.float32), requires_grad=True)
    state = rum.init_state(f1)
    run = run_rum(rum, (f1, f2), init, 3, state, groups=1, detach_sampling=True)
    assert len(run.predictions) == 3
    run.predictions[-1].sum().backward()
    assert init.grad is not None and np.abs(init.grad).sum() > 0


def test_cascade_forward_structure(rng):
    model = tiny_model(iters_per_level=(2, 3, 1))
    left = rng.uniform(0, 1, (1, 3, 32, 48)).astype(np.float32)
    right = rng.uniform(0, 1, (1, 3, 32, 48)).astype(np.float32)
    out = model(Tensor(left), Tensor(right))
    assert list(out.levels) == [1 / 16, 1 / 8, 1 / 4]
    assert [len(v) for v in out.levels.values()] == [2, 3, 1]
    assert out.levels[1 / 16][0].shape == (1, 1, 2, 3)
    assert out.levels[1 / 4][0].shape == (1, 1, 8, 12)
    assert out.final.shape == (1, 1, 32, 48)
    assert out.count == 6
    assert set(out.loss_terms()) == {1 / 16, 1 / 8, 1 / 4, 1.0}


def test_level_jitter_shifts_only_the_handoff(rng):
    model = tiny_model(iters_per_level=(1, 1, 1))
    left = Tensor(rng.uniform(0, 1, (2, 3, 32, 48)).astype(np.float32))
    right = Tensor(rng.uniform(0, 1, (2, 3, 32, 48)).astype(np.float32))
    with ag.no_grad():
        plain = model(left, right)
        a = model(left, right, init_jitter=(1.5, np.random.default_rng(4)))
        b = model(left, right, init_jitter=(1.5, np.random.default_rng(4)))
        zero = model(left, right, init_jitter=(0.0, np.random.default_rng(4)))
    assert a.levels[1 / 16][0].data.tobytes() == plain.levels[1 / 16][0].data.tobytes()
    assert not np.allclose(a.levels[1 / 8][0].data, plain.levels[1 / 8][0].data)
    assert a.final.data.tobytes() == b.final.data.tobytes()
    np.testing.assert_array_equal(zero.final.data, plain.final.data)


def test_single_level_cascade_uses_quarter_scale(rng):
    model = tiny_model(n_levels=1, iters_per_level=(3,))
    x = rng.uniform(0, 1, (1, 3, 32, 32)).astype(np.float32)
    out = model(Tensor(x), Tensor(x))
    assert list(out.levels) == [1 / 4] and len(out.levels[1 / 4]) == 3


def test_one_stage_stacked_equals_cascade_bitwise(rng):
    model = tiny_model()
    left = rng.uniform(0, 1, (1, 3, 32, 48)).astype(np.float32)
    right = rng.uniform(0, 1, (1, 3, 32, 48)).astype(np.float32)
    with ag.no_grad():
        a = stacked_inference(model, Tensor(left), Tensor(right), n_stages=1).data
        b = cascade_forward(model, model.pyramids(Tensor(left), Tensor(right))).final.data
    assert a.tobytes() == b.tobytes()


def test_stacked_inference_shapes_and_divisibility(rng):
    model = tiny_model()
    x = rng.uniform(0, 1, (3, 64, 64)).astype(np.float32)
    with ag.no_grad():
        out = stacked_inference(model, Tensor(x), Tensor(x), n_stages=3)
    assert out.shape == (1, 64, 64)
    with pytest.raises(InputError):
        stacked_inference(model, Tensor(x[:, :48]), Tensor(x[:, :48]), n_stages=3)
    with pytest.raises(InputError):
        stacked_inference(model, Tensor(x), Tensor(x), n_stages=4)


def test_model_save_load_roundtrip(tmp_path, rng):
    model = tiny_model()
    x = rng.uniform(0, 1, (1, 3, 32, 32)).astype(np.float32)
    model.save(tmp_path / "m.ckpt", extra={"step": 5})
    back, meta, _ = StereoModel.load(tmp_path / "m.ckpt")
    assert meta["step"] == 5 and back.config == model.config
    assert back.infer(x, x).tobytes() == model.infer(x, x).tobytes()
