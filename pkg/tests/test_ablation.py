import numpy as np
import pytest

from cascade_stereo import autograd as ag
from cascade_stereo.ablation import (
    CORRELATION_VARIANTS, DISTURB_METHODS, DISTURBANCES, disturb, run_suite, split_iterations, variant,
)
from cascade_stereo.errors import UsageError
from toys import small_scene_config, tiny_model


@pytest.fixture(scope="module")
def model():
    return tiny_model()


def test_row_counts(model):
    scene = small_scene_config()
    with ag.no_grad():
        corr = run_suite("correlation", model, scene, 1, 0)
        casc = run_suite("cascades", model, scene, 1, 0)
        dist = run_suite("disturb", model, scene, 1, 0)
    assert [r["variant"] for r in corr] == [v[0] for v in CORRELATION_VARIANTS]
    assert [r["iters"] for r in casc] == ["12", "6-6", "4-4-4"]
    assert len(dist) == len(DISTURBANCES) * len(DISTURB_METHODS)
    for r in corr + casc + dist:
        assert np.isfinite(r["epe"]) and 0 <= r["bad_2"] <= r["bad_1"] <= 100
    for r in dist:
        assert r["delta_epe"] == pytest.approx(r["epe"] - r["clean_epe"])


def test_stacked_rows(model):
    with ag.no_grad():
        rows = run_suite("stacked", model, small_scene_config(), 1, 0)
    assert [(r["resolution"], r["variant"]) for r in rows] == [
        ("32x48", "1 stage(s)"), ("64x96", "1 stage(s)"), ("64x96", "2 stage(s)"),
        ("128x192", "1 stage(s)"), ("128x192", "2 stage(s)"), ("128x192", "3 stage(s)")]


def test_cells_are_deterministic(model):
    with ag.no_grad():
        a = run_suite("disturb", model, small_scene_config(), 1, 3)
        b = run_suite("disturb", model, small_scene_config(), 1, 3)
    assert a == b


def test_vertical_shift_disturbance_is_one_pixel(rng):
    img = rng.uniform(0, 1, (3, 8, 10)).astype(np.float32)
    out = disturb(img, "vertical_shift", rng)
    np.testing.assert_array_equal(out[:, :-1], img[:, 1:])
    np.testing.assert_array_equal(out[:, -1], img[:, -1])


@pytest.mark.parametrize("kind", DISTURBANCES)
def test_disturbances_keep_range_and_shape(kind, rng):
    img = rng.uniform(0, 1, (3, 16, 24)).astype(np.float32)
    out = disturb(img, kind, np.random.default_rng(0))
    assert out.shape == img.shape and out.dtype == img.dtype
    assert out.min() >= 0 and out.max() <= 1 and not np.array_equal(out, img)


def test_split_iterations():
    assert split_iterations(12, 3) == (4, 4, 4)
    assert split_iterations(13, 3) == (4, 4, 5)
    with pytest.raises(UsageError):
        split_iterations(2, 3)


def test_variant_shares_weights(model):
    v = variant(model, corr_mode="1d")
    assert v.config.corr_mode == "1d" and model.config.corr_mode == "alternate"
    for (n1, p1), (n2, p2) in zip(model.named_parameters(), v.named_parameters()):
        assert n1 == n2 and np.array_equal(p1.data, p2.data) and p1 is not p2


def test_unknown_suite(model):
    with pytest.raises(UsageError):
        run_suite("everything", model, small_scene_config(), 1, 0)
    with pytest.raises(UsageError):
        disturb(np.zeros((3, 4, 4)), "fog", np.random.default_rng(0))
