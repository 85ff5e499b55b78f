"""Disparity error statistics and foreground-separation (mxIoU) metrics."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy import ndimage

from .errors import InputError

BAD_THRESHOLDS = (0.5, 1.0, 2.0)


@dataclass
class EvalReport:
    avg_err: float
    bad_0_5: float
    bad_1: float
    bad_2: float
    rms: float
    a95: float
    d1_all: float
    epe: float
    pixel_count: int
    mask_policy: str = "noc"

    def to_dict(self) -> dict:
        return asdict(self)


METRIC_FIELDS = tuple(f.name for f in fields(EvalReport) if f.name not in ("pixel_count", "mask_policy"))


def _plane(a) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim == 3 and a.shape[0] == 1:
        a = a[0]
    if a.ndim != 2:
        raise InputError(f"expected an (H,W) map, got shape {a.shape}")
    return a


def bad_p(err: np.ndarray, p: float) -> float:
    return float(100.0 * np.mean(err > p))


def evaluate(pred, gt, mask=None, mask_policy: str = "noc") -> EvalReport:
    """Error statistics over ``mask`` (all finite-gt pixels when None)."""
    pred = _plane(pred).astype(np.float64)
    gt = _plane(gt).astype(np.float64)
    if pred.shape != gt.shape:
        raise InputError(f"prediction {pred.shape} and ground truth {gt.shape} differ in size")
    m = np.isfinite(gt) if mask is None else (_plane(mask).astype(bool) & np.isfinite(gt))
    if not m.any():
        raise InputError("evaluation mask is empty")
    e = np.abs(pred[m] - gt[m])
    if not np.isfinite(e).all():
        raise InputError("prediction contains non-finite values inside the mask")
    avg = float(e.mean())
    d1 = float(100.0 * np.mean((e > 3.0) & (e > 0.05 * np.abs(gt[m]))))
    return EvalReport(avg_err=avg, bad_0_5=bad_p(e, 0.5), bad_1=bad_p(e, 1.0), bad_2=bad_p(e, 2.0),
                      rms=float(np.sqrt(np.mean(e * e))), a95=float(np.percentile(e, 95)), d1_all=d1, epe=avg,
                      pixel_count=int(m.sum()), mask_policy=mask_policy)


def aggregate(reports: list[EvalReport]) -> EvalReport:
    """Pixel-count-weighted mean of every metric."""
    if not reports:
        raise InputError("nothing to aggregate")
    wts = np.array([r.pixel_count for r in reports], dtype=np.float64)
    vals = {k: float(np.dot(wts, [getattr(r, k) for r in reports]) / wts.sum()) for k in METRIC_FIELDS}
    return EvalReport(**vals, pixel_count=int(wts.sum()), mask_policy=reports[0].mask_policy)


# ------------------------------------------------------------------ mxIoU
def _check_fg(fg: np.ndarray) -> None:
    if not fg.any() or fg.all():
        raise InputError("foreground mask must be neither empty nor full")


def _sweep(d: np.ndarray, fg: np.ndarray) -> tuple[float, float]:
    """max IoU(fg, {d > t}) over t in {below min} plus midpoints of consecutive unique values."""
    vals, inv = np.unique(d, return_inverse=True)
    n_fg_at = np.bincount(inv, weights=fg.astype(np.float64), minlength=len(vals))
    n_at = np.bincount(inv, minlength=len(vals)).astype(np.float64)
    # candidate k keeps values vals[k:], i.e. threshold just below vals[k]
    inter = np.cumsum(n_fg_at[::-1])[::-1]
    size = np.cumsum(n_at[::-1])[::-1]
    iou = inter / (fg.sum() + size - inter)
    k = int(np.argmax(iou))  # first maximum = smallest threshold
    t = vals[0] - 1.0 if k == 0 else 0.5 * (vals[k - 1] + vals[k])
    return float(iou[k]), float(t)


def mxiou(disp, fg_mask) -> tuple[float, float]:
    """Best IoU between the foreground mask and a disparity-threshold mask, and that threshold."""
    d = _plane(disp).astype(np.float64)
    fg = _plane(fg_mask).astype(bool)
    if d.shape != fg.shape:
        raise InputError("disparity and mask differ in size")
    _check_fg(fg)
    return _sweep(d.ravel(), fg.ravel())


def boundary_band(fg_mask, p: int) -> np.ndarray:
    """Pixels whose Chebyshev p-neighbourhood (clipped to the image) holds both fg and bg."""
    if p < 1:
        raise InputError("band width p must be >= 1")
    fg = _plane(fg_mask).astype(bool)
    st = np.ones((2 * p + 1, 2 * p + 1), dtype=bool)
    dil = ndimage.binary_dilation(fg, structure=st)
    ero = ndimage.binary_erosion(fg, structure=st, border_value=1)
    return dil & ~ero


def mxioubd(disp, fg_mask, p: int = 4) -> float:
    """mxIoU restricted to the boundary band of width ``p``."""
    d = _plane(disp).astype(np.float64)
    fg = _plane(fg_mask).astype(bool)
    if d.shape != fg.shape:
        raise InputError("disparity and mask differ in size")
    band = boundary_band(fg, p)
    if not band.any():
        raise InputError("boundary band is empty")
    return _sweep(d[band], fg[band])[0]


# -------------------------------------------------------------- reporting
def write_reports_jsonl(path: str | os.PathLike, per_image: list[tuple[str, EvalReport]], total: EvalReport) -> None:
    with open(path, "w") as f:
        for name, rep in per_image:
            f.write(json.dumps({"image": name, **rep.to_dict()}) + "\n")
        f.write(json.dumps({"image": "__aggregate__", **total.to_dict()}) + "\n")


def write_csv(path: str | os.PathLike, rows: list[dict]) -> None:
    if not rows:
        raise InputError("no rows to write")
    keys = list(rows[0].keys())
    for r in rows[1:]:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)
