"""Desk-scale comparison grids: correlation variants, cascade depth, stacked stages, input disturbances."""

from __future__ import annotations

import copy
import logging
from dataclasses import replace

import numpy as np
from scipy import ndimage

from .augment import apply_chromatic, homography_from_corners, warp_image
from .errors import UsageError
from .metrics import evaluate
from .model import StereoModel
from .synth import SceneConfig, ScenePair, generate_scene
from .training import PairDataset, TrainConfig, train

log = logging.getLogger(__name__)

SUITES = ("correlation", "cascades", "stacked", "disturb")
CORRELATION_VARIANTS = (
    ("allpairs(1D)", "allpairs", "1d"),
    ("allpairs(2D)", "allpairs", "2d"),
    ("local(1D)", "local", "1d"),
    ("local(2D)", "local", "2d"),
    ("local(1D+2D)", "local", "alternate"),
)
DISTURBANCES = ("blur", "color_transform", "chromatic_noise", "perspective", "vertical_shift", "spatial_distortion")
DISTURB_METHODS = ("1d", "2d", "alternate")


def eval_set(scene: SceneConfig, count: int, seed: int) -> list[ScenePair]:
    return [generate_scene(scene, seed=seed + i) for i in range(count)]


def score(model: StereoModel, pairs: list[ScenePair], n_stages: int = 1, corr_mode: str | None = None,
          iters_per_level=None) -> dict:
    """Mean EPE / Bad-1 / Bad-2 over non-occluded pixels, averaged per image."""
    reps = []
    for p in pairs:
        pred = model.infer(p.left[None], p.right[None], n_stages=n_stages, corr_mode=corr_mode,
                           iters_per_level=iters_per_level)[0]
        reps.append(evaluate(pred, p.disparity, p.occlusion))
    return {"epe": float(np.mean([r.epe for r in reps])), "bad_1": float(np.mean([r.bad_1 for r in reps])),
            "bad_2": float(np.mean([r.bad_2 for r in reps]))}


def variant(model: StereoModel, **changes) -> StereoModel:
    """Copy of ``model`` with a modified configuration and the same weights."""
    cfg = replace(copy.deepcopy(model.config), **changes)
    out = StereoModel(cfg)
    out.load_state_dict(model.state_dict())
    return out


def finetune(model: StereoModel, train_pairs: list[ScenePair] | None, steps: int, seed: int, lr: float) -> StereoModel:
    if steps <= 0 or not train_pairs:
        return model
    cfg = TrainConfig(base_lr=lr, warmup_iters=0, decay_start=max(1, steps // 2), total_iters=steps + 1, seed=seed)
    train(model, PairDataset(train_pairs), cfg)
    return model


def split_iterations(total: int, n_levels: int) -> tuple[int, ...]:
    """Equal share per level, remainder to the finest level."""
    base = total // n_levels
    its = [base] * n_levels
    its[-1] += total - base * n_levels
    if min(its) < 1:
        raise UsageError(f"{total} iterations cannot be spread over {n_levels} levels")
    return tuple(its)


# ---------------------------------------------------------------- suites
def correlation_suite(model, pairs, train_pairs=None, finetune_steps=0, seed=0, lr=2e-4) -> list[dict]:
    rows = []
    for name, ctype, mode in CORRELATION_VARIANTS:
        m = finetune(variant(model, corr_type=ctype, corr_mode=mode), train_pairs, finetune_steps, seed, lr)
        rows.append({"suite": "correlation", "variant": name, **score(m, pairs)})
    return rows


def cascades_suite(model, pairs, train_pairs=None, finetune_steps=0, seed=0, lr=2e-4) -> list[dict]:
    total = sum(model.config.iters_per_level)
    rows = []
    for n in (1, 2, 3):
        its = split_iterations(total, n)
        m = finetune(variant(model, n_levels=n, iters_per_level=its), train_pairs, finetune_steps, seed, lr)
        rows.append({"suite": "cascades", "variant": f"{n} level(s)", "iters": "-".join(map(str, its)),
                     **score(m, pairs)})
    return rows


def stacked_suite(model, scene: SceneConfig, count: int, seed: int) -> list[dict]:
    """Stage counts 1..3 on pairs rendered at 1x, 2x and 4x the base resolution."""
    rows = []
    for k, factor in enumerate((1, 2, 4)):
        sc = replace(scene, height=scene.height * factor, width=scene.width * factor,
                     d_min=scene.d_min * factor, d_max=scene.d_max * factor)
        pairs = eval_set(sc, count, seed + 1000 * k)
        for stages in range(1, k + 2):
            rows.append({"suite": "stacked", "variant": f"{stages} stage(s)",
                         "resolution": f"{sc.height}x{sc.width}", **score(model, pairs, n_stages=stages)})
    return rows


def disturb(img: np.ndarray, kind: str, rng: np.random.Generator) -> np.ndarray:
    """Apply one named disturbance to a (3,H,W) image."""
    _, h, w = img.shape
    if kind == "blur":
        return np.stack([ndimage.gaussian_filter(c, 1.0, mode="nearest") for c in img]).astype(img.dtype)
    if kind == "color_transform":
        return apply_chromatic(img, 1.2, 0.8, 1.3)
    if kind == "chromatic_noise":
        return np.clip(img + rng.normal(0, 0.03, img.shape), 0, 1).astype(img.dtype)
    if kind == "perspective":
        src = np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], dtype=np.float64)
        dst = src + np.array([[1.5, 1.5], [-1.5, 1.5], [1.5, -1.5], [-1.5, -1.5]])
        return warp_image(img, homography_from_corners(src, dst), 0.0)
    if kind == "vertical_shift":
        return warp_image(img, np.eye(3), 1.0)
    if kind == "spatial_distortion":
        ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
        field = [ndimage.gaussian_filter(rng.normal(0, 1, (h, w)), 6.0) for _ in range(2)]
        field = [f / (np.abs(f).max() + 1e-12) for f in field]
        coords = [ys + field[1], xs + field[0]]
        return np.stack([ndimage.map_coordinates(c.astype(np.float64), coords, order=1, mode="nearest")
                         for c in img]).astype(img.dtype)
    raise UsageError(f"unknown disturbance {kind!r}")


def disturb_suite(model, pairs, seed=0) -> list[dict]:
    """Each disturbance hits the right view; rows give EPE with and without it per matching mode."""
    rows = []
    clean = {m: score(model, pairs, corr_mode=m) for m in DISTURB_METHODS}
    for kind in DISTURBANCES:
        rng = np.random.default_rng([seed, DISTURBANCES.index(kind)])
        disturbed = [p.replace(right=disturb(p.right, kind, rng)) for p in pairs]
        for mode in DISTURB_METHODS:
            s = score(model, disturbed, corr_mode=mode)
            rows.append({"suite": "disturb", "disturbance": kind, "variant": mode, **s,
                         "clean_epe": clean[mode]["epe"], "delta_epe": s["epe"] - clean[mode]["epe"]})
    return rows


def run_suite(suite: str, model: StereoModel, scene: SceneConfig, count: int, seed: int,
              finetune_steps: int = 0, train_pairs: list[ScenePair] | None = None) -> list[dict]:
    if suite not in SUITES:
        raise UsageError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    if suite == "stacked":
        return stacked_suite(model, scene, count, seed)
    pairs = eval_set(scene, count, seed)
    if suite == "correlation":
        return correlation_suite(model, pairs, train_pairs, finetune_steps, seed)
    if suite == "cascades":
        return cascades_suite(model, pairs, train_pairs, finetune_steps, seed)
    return disturb_suite(model, pairs, seed)
