import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cascade_stereo.errors import InputError
from cascade_stereo.metrics import (
    METRIC_FIELDS, aggregate, boundary_band, evaluate, mxiou, mxioubd, write_csv, write_reports_jsonl,
)


# ------------------------------------------------------------------ oracles
def loop_metrics(pred, gt, mask):
    errs, gts = [], []
    for y in range(gt.shape[0]):
        for x in range(gt.shape[1]):
            if mask[y, x]:
                errs.append(abs(pred[y, x] - gt[y, x]))
                gts.append(gt[y, x])
    n = len(errs)
    out = {"avg_err": sum(errs) / n, "rms": math.sqrt(sum(e * e for e in errs) / n)}
    for name, p in (("bad_0_5", 0.5), ("bad_1", 1.0), ("bad_2", 2.0)):
        out[name] = 100.0 * sum(e > p for e in errs) / n
    out["d1_all"] = 100.0 * sum((e > 3.0) and (e > 0.05 * abs(g)) for e, g in zip(errs, gts)) / n
    s = sorted(errs)
    rank = 0.95 * (n - 1)
    lo = int(math.floor(rank))
    hi = min(lo + 1, n - 1)
    out["a95"] = s[lo] + (s[hi] - s[lo]) * (rank - lo)
    out["epe"] = out["avg_err"]
    return out


def loop_iou(d, fg, t):
    inter = union = 0
    for y in range(d.shape[0]):
        for x in range(d.shape[1]):
            a, b = bool(fg[y, x]), d[y, x] > t
            inter += a and b
            union += a or b
    return inter / union


def loop_mxiou(d, fg, where=None):
    """Check every unique value as a threshold, plus one below the minimum."""
    sel = np.ones(d.shape, bool) if where is None else where
    dd = np.where(sel, d, -np.inf)
    ff = fg & sel
    vals = sorted(set(d[sel].tolist()))
    best = -1.0
    for t in [vals[0] - 1.0] + vals:
        inter = union = 0
        for y in range(d.shape[0]):
            for x in range(d.shape[1]):
                if sel[y, x]:
                    a, b = bool(ff[y, x]), dd[y, x] > t
                    inter += a and b
                    union += a or b
        best = max(best, inter / union)
    return best


def loop_band(fg, p):
    h, w = fg.shape
    out = np.zeros_like(fg, dtype=bool)
    for y in range(h):
        for x in range(w):
            seen = {bool(fg[yy, xx]) for yy in range(max(0, y - p), min(h, y + p + 1))
                    for xx in range(max(0, x - p), min(w, x + p + 1))}
            out[y, x] = len(seen) == 2
    return out


def random_instance(seed):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(0, 40, (16, 16))
    pred = gt + rng.normal(0, 2.5, (16, 16)) * (rng.uniform(size=(16, 16)) < 0.7)
    # quantise a few predictions so some errors fall exactly on thresholds
    pred[:2] = np.round(pred[:2])
    gt[:2] = np.round(gt[:2])
    mask = rng.uniform(size=(16, 16)) < 0.8
    fg = np.zeros((16, 16), bool)
    fg[rng.integers(2, 6):rng.integers(9, 15), rng.integers(1, 7):rng.integers(8, 16)] = True
    return pred, gt, mask, fg


# -------------------------------------------------------------- error stats
def test_perfect_prediction():
    gt = np.random.default_rng(0).uniform(0, 10, (8, 8))
    r = evaluate(gt, gt)
    assert all(getattr(r, k) == 0.0 for k in METRIC_FIELDS)
    assert r.pixel_count == 64


def test_constant_offset():
    gt = np.random.default_rng(0).uniform(0, 10, (8, 8))
    r = evaluate(gt + 3.0, gt)
    assert r.avg_err == pytest.approx(3.0) and r.rms == pytest.approx(3.0) and r.a95 == pytest.approx(3.0)
    assert r.bad_2 == 100.0 and r.bad_1 == 100.0 and r.bad_0_5 == 100.0


@pytest.mark.parametrize("seed", range(20))
def test_metrics_match_loop_oracle(seed):
    pred, gt, mask, fg = random_instance(seed)
    r = evaluate(pred, gt, mask)
    want = loop_metrics(pred, gt, mask)
    for k in METRIC_FIELDS:
        assert abs(getattr(r, k) - want[k]) <= 1e-9, k
    assert r.pixel_count == int(mask.sum())
    assert abs(mxiou(pred, fg)[0] - loop_mxiou(pred, fg)) <= 1e-9
    band = loop_band(fg, 4)
    assert np.array_equal(boundary_band(fg, 4), band)
    assert abs(mxioubd(pred, fg, 4) - loop_mxiou(pred, fg, band)) <= 1e-9


def test_report_invariants():
    for seed in range(10):
        pred, gt, mask, _ = random_instance(seed)
        r = evaluate(pred, gt, mask)
        e = np.abs(pred - gt)[mask]
        assert r.rms >= r.avg_err and r.a95 <= e.max()
        assert all(0.0 <= v <= 100.0 for v in (r.bad_0_5, r.bad_1, r.bad_2, r.d1_all))


def test_evaluate_errors():
    with pytest.raises(InputError):
        evaluate(np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((4, 4), bool))
    with pytest.raises(InputError):
        evaluate(np.zeros((4, 4)), np.zeros((4, 5)))


def test_d1_needs_both_conditions():
    gt = np.array([[100.0, 10.0, 10.0]])
    pred = np.array([[104.0, 14.0, 12.0]])
    # 4 px on 100 is under 5%; 4 px on 10 is an outlier; 2 px is under 3 px
    assert evaluate(pred, gt).d1_all == pytest.approx(100.0 / 3)


def test_aggregate_is_pixel_weighted():
    a = evaluate(np.full((2, 2), 1.0), np.zeros((2, 2)))
    b = evaluate(np.full((4, 4), 4.0), np.zeros((4, 4)))
    tot = aggregate([a, b])
    assert tot.pixel_count == 20
    assert tot.avg_err == pytest.approx((4 * 1.0 + 16 * 4.0) / 20)
    with pytest.raises(InputError):
        aggregate([])


# ------------------------------------------------------------------- mxIoU
def test_mxiou_perfect_separation():
    fg = np.zeros((6, 6), bool)
    fg[1:4, 2:5] = True
    d = np.where(fg, 10.0, 0.0)
    iou, t = mxiou(d, fg)
    assert iou == 1.0 and 0.0 < t < 10.0
    assert mxioubd(d, fg) == 1.0


def test_mxiou_constant_disparity():
    fg = np.zeros((5, 8), bool)
    fg[:2, :3] = True
    iou, _ = mxiou(np.full((5, 8), 3.0), fg)
    assert iou == pytest.approx(6 / 40)


def test_mxiou_tie_prefers_smallest_threshold():
    # the all-pixels mask and {d > 3.5} both give IoU 1/2
    d = np.array([[1.0, 2.0, 3.0, 4.0]])
    fg = np.array([[True, False, False, True]])
    iou, t = mxiou(d, fg)
    assert iou == 0.5 and t == 0.0
    d = np.array([[0.0, 2.0, 2.0, 5.0]])
    fg = np.array([[False, True, True, False]])
    iou, t = mxiou(d, fg)
    assert iou == pytest.approx(2 / 3) and t == pytest.approx(1.0)


def test_mxiou_exhaustive_threshold_identity():
    rng = np.random.default_rng(5)
    for _ in range(10):
        d = rng.integers(0, 6, (8, 8)).astype(float)
        fg = rng.uniform(size=(8, 8)) < 0.4
        best = max(loop_iou(d, fg, t) for t in np.unique(d).tolist() + [d.min() - 1])
        assert mxiou(d, fg)[0] == pytest.approx(best, abs=1e-12)


def test_mxiou_errors():
    with pytest.raises(InputError):
        mxiou(np.zeros((3, 3)), np.zeros((3, 3), bool))
    with pytest.raises(InputError):
        mxiou(np.zeros((3, 3)), np.ones((3, 3), bool))
    with pytest.raises(InputError):
        boundary_band(np.eye(3, dtype=bool), 0)


@pytest.mark.parametrize("seed", range(5))
def test_band_matches_distance_test(seed):
    rng = np.random.default_rng(seed)
    fg = rng.uniform(size=(16, 16)) < 0.3
    fg[5:11, 4:12] = True
    for p in (1, 2, 4):
        assert np.array_equal(boundary_band(fg, p), loop_band(fg, p))


# -------------------------------------------------------------- properties
field_seeds = st.integers(0, 2 ** 31 - 1)


@settings(max_examples=40, deadline=None)
@given(field_seeds)
def test_mxiou_invariant_to_monotone_transforms(seed):
    pred, _, _, fg = random_instance(seed)
    base = mxiou(pred, fg)[0]
    for f in (lambda v: 3.0 * v + 7.0, np.exp, lambda v: np.arctan(v / 10.0), lambda v: v ** 3):
        assert mxiou(f(pred), fg)[0] == pytest.approx(base, abs=1e-12)
    assert mxioubd(np.exp(pred / 10.0), fg) == pytest.approx(mxioubd(pred, fg), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(field_seeds, st.floats(0.1, 10.0))
def test_bad_monotone_and_scaling(seed, k):
    pred, gt, mask, _ = random_instance(seed)
    r = evaluate(pred, gt, mask)
    assert r.bad_0_5 >= r.bad_1 >= r.bad_2
    s = evaluate(gt + k * (pred - gt), gt, mask)
    assert s.avg_err == pytest.approx(k * r.avg_err, rel=1e-9)
    assert s.rms == pytest.approx(k * r.rms, rel=1e-9)
    assert s.a95 == pytest.approx(k * r.a95, rel=1e-9)
    e = np.abs(pred - gt)[mask]
    assert s.bad_2 == pytest.approx(100.0 * np.mean(k * e > 2.0))
    assert s.bad_2 == pytest.approx(100.0 * np.mean(e > 2.0 / k))


@settings(max_examples=30, deadline=None)
@given(field_seeds)
def test_metrics_invariant_to_pixel_permutation(seed):
    pred, gt, mask, fg = random_instance(seed)
    perm = np.random.default_rng(seed).permutation(256)

    def shuffle(a):
        return a.ravel()[perm].reshape(16, 16)

    a, b = evaluate(pred, gt, mask), evaluate(shuffle(pred), shuffle(gt), shuffle(mask))
    for k in METRIC_FIELDS:
        assert getattr(a, k) == pytest.approx(getattr(b, k), abs=1e-12)
    assert mxiou(pred, fg)[0] == pytest.approx(mxiou(shuffle(pred), shuffle(fg))[0], abs=1e-12)


# --------------------------------------------------------------- reporting
def test_report_files(tmp_path):
    a = evaluate(np.ones((2, 2)), np.zeros((2, 2)))
    b = evaluate(np.full((2, 3), 2.0), np.zeros((2, 3)))
    write_reports_jsonl(tmp_path / "r.jsonl", [("0", a), ("1", b)], aggregate([a, b]))
    rows = [json.loads(line) for line in (tmp_path / "r.jsonl").read_text().splitlines()]
    assert [r["image"] for r in rows] == ["0", "1", "__aggregate__"]
    assert rows[-1]["avg_err"] == pytest.approx((4 + 12) / 10)
    write_csv(tmp_path / "t.csv", [{"a": 1, "b": 2}, {"a": 3, "c": 4}])
    with open(tmp_path / "t.csv") as f:
        got = list(csv.DictReader(f))
    assert list(got[0]) == ["a", "b", "c"] and got[1]["c"] == "4"
