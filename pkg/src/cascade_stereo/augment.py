"""Training-time augmentation: camera inconsistency and imperfect rectification.

Every function is pure and deterministic given its seed, and appends the
parameters it applied to ``pair.manifest["augment"]``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .autograd.functional import _resize_matrix
from .errors import ConfigError, InputError
from .synth import ScenePair

PIPELINE_ORDER = ("chromatic", "spatial", "occlusion", "resize_crop")


@dataclass
class AugmentConfig:
    brightness: tuple[float, float] = (0.6, 1.4)
    contrast: tuple[float, float] = (0.6, 1.4)
    gamma: tuple[float, float] = (0.7, 1.5)
    max_corner_shift: float = 2.0
    max_vertical_shift: float = 2.0
    occlusion_side: tuple[float, float] = (50.0, 100.0)
    scale: tuple[float, float] = (0.5, 2.0)
    crop: tuple[int, int] | None = None  # target (H, W); None keeps the input size
    p_chromatic: float = 1.0
    p_spatial: float = 1.0
    p_occlusion: float = 0.5
    p_resize_crop: float = 1.0
    max_retries: int = 20

    def validate(self) -> None:
        for name in ("brightness", "contrast", "gamma", "occlusion_side", "scale"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ConfigError(f"augment range {name} must satisfy 0 < lo <= hi")
        for name in ("p_chromatic", "p_spatial", "p_occlusion", "p_resize_crop"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be a probability")
        if self.crop is not None and (self.crop[0] % 16 or self.crop[1] % 16):
            raise ConfigError("crop size must be divisible by 16")

    def to_dict(self) -> dict:
        return asdict(self)


def _record(pair: ScenePair, op: str, params: dict, **arrays) -> ScenePair:
    manifest = dict(pair.manifest)
    manifest["augment"] = list(manifest.get("augment", [])) + [{"op": op, **params}]
    return pair.replace(manifest=manifest, **arrays)


# -------------------------------------------------------------- chromatic
def apply_chromatic(img: np.ndarray, brightness: float, contrast: float, gamma: float) -> np.ndarray:
    x = np.clip(img.astype(np.float64), 0.0, 1.0) ** gamma
    mean = x.mean()
    x = (x - mean) * contrast + mean
    return np.clip(x * brightness, 0.0, 1.0).astype(img.dtype)


def chromatic_asymmetric(pair: ScenePair, seed: int, cfg: AugmentConfig | None = None,
                         params: dict | None = None) -> ScenePair:
    """Independent brightness, contrast and gamma for each view.

    ``params`` may supply ``{"left": (b, c, g), "right": (b, c, g)}`` directly.
    """
    cfg = cfg or AugmentConfig()
    if params is None:
        rng = np.random.default_rng(seed)
        params = {side: tuple(float(rng.uniform(*rg)) for rg in (cfg.brightness, cfg.contrast, cfg.gamma))
                  for side in ("left", "right")}
    left = apply_chromatic(pair.left, *params["left"])
    right = apply_chromatic(pair.right, *params["right"])
    rec = {side: list(map(float, params[side])) for side in ("left", "right")}
    return _record(pair, "chromatic", rec, left=left, right=right)


# ---------------------------------------------------------------- spatial
def homography_from_corners(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """3x3 matrix mapping the four ``src`` points (4,2) onto ``dst`` (4,2)."""
    a = []
    b = []
    for (x, y), (u, v) in zip(src, dst):
        a.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        a.append([0, 0, 0, x, y, 1, -v * x, -v * y])
        b.extend([u, v])
    h = np.linalg.solve(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
    return np.append(h, 1.0).reshape(3, 3)


def warp_image(img: np.ndarray, hmat: np.ndarray, shift_y: float) -> np.ndarray:
    """out(x, y) = img(H(x, y) + (0, shift_y)), bilinear with edge replication."""
    _, h, w = img.shape
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    pts = hmat @ np.stack([xs.ravel(), ys.ravel(), np.ones(xs.size)])
    sx = (pts[0] / pts[2]).reshape(h, w)
    sy = (pts[1] / pts[2]).reshape(h, w) + shift_y
    out = np.stack([ndimage.map_coordinates(c.astype(np.float64), [sy, sx], order=1, mode="nearest")
                    for c in img])
    return out.astype(img.dtype)


def _disk(rng: np.random.Generator, radius: float) -> tuple[float, float]:
    r = radius * np.sqrt(rng.uniform())
    t = rng.uniform(0, 2 * np.pi)
    return float(r * np.cos(t)), float(r * np.sin(t))


def draw_vertical_shift(rng: np.random.Generator, bound: float) -> float:
    """Uniform on the open interval (-bound, bound)."""
    while True:
        v = float(rng.uniform(-bound, bound))
        if abs(v) < bound or bound == 0:
            return v


def spatial_right_perturb(pair: ScenePair, seed: int, cfg: AugmentConfig | None = None,
                          params: dict | None = None) -> ScenePair:
    """Small random homography plus vertical shift on the right view; gt is left untouched.

    ``params`` may give ``{"corner_offsets": 4x2, "shift_y": float}``.
    """
    cfg = cfg or AugmentConfig()
    _, h, w = pair.right.shape
    if params is None:
        rng = np.random.default_rng(seed)
        params = {"corner_offsets": [_disk(rng, cfg.max_corner_shift) for _ in range(4)],
                  "shift_y": draw_vertical_shift(rng, cfg.max_vertical_shift)}
    src = np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], dtype=np.float64)
    offs = np.asarray(params["corner_offsets"], dtype=np.float64)
    shift_y = float(params["shift_y"])
    if not offs.any() and shift_y == 0.0:
        right = pair.right.copy()
    else:
        right = warp_image(pair.right, homography_from_corners(src, src + offs), shift_y)
    rec = {"corner_offsets": offs.tolist(), "shift_y": shift_y}
    return _record(pair, "spatial", rec, right=right)


# -------------------------------------------------------------- occlusion
def occlusion_side_range(h: int, w: int, side: tuple[float, float]) -> tuple[float, float]:
    """Rectangle side range, shrunk linearly with the image below 100 px."""
    f = min(1.0, min(h, w) / 100.0)
    return side[0] * f, side[1] * f


def rect_occlusion(pair: ScenePair, seed: int, cfg: AugmentConfig | None = None) -> ScenePair:
    """Fill one random rectangle of the right view with its mean colour."""
    cfg = cfg or AugmentConfig()
    _, h, w = pair.right.shape
    lo, hi = occlusion_side_range(h, w, cfg.occlusion_side)
    rng = np.random.default_rng(seed)
    rh = int(round(rng.uniform(lo, hi)))
    rw = int(round(rng.uniform(lo, hi)))
    rh, rw = min(max(rh, 1), h), min(max(rw, 1), w)
    y0 = int(rng.integers(0, h - rh + 1))
    x0 = int(rng.integers(0, w - rw + 1))
    right = pair.right.copy()
    fill = pair.right.reshape(3, -1).mean(axis=1)
    right[:, y0:y0 + rh, x0:x0 + rw] = fill[:, None, None]
    rec = {"x0": x0, "y0": y0, "height": rh, "width": rw, "fill": fill.astype(float).tolist()}
    return _record(pair, "occlusion", rec, right=right)


# ------------------------------------------------------------ resize/crop
def _resize(arr: np.ndarray, nh: int, nw: int) -> np.ndarray:
    h, w = arr.shape[-2:]
    if (h, w) == (nh, nw):
        return arr.copy()
    ry = _resize_matrix(h, nh, np.float64)
    rx = _resize_matrix(w, nw, np.float64)
    return (ry @ arr.astype(np.float64) @ rx.T).astype(arr.dtype)


def _resize_nearest(arr: np.ndarray, nh: int, nw: int) -> np.ndarray:
    h, w = arr.shape[-2:]
    iy = np.minimum(((np.arange(nh) + 0.5) * h / nh).astype(np.int64), h - 1)
    ix = np.minimum(((np.arange(nw) + 0.5) * w / nw).astype(np.int64), w - 1)
    return arr[..., iy[:, None], ix[None, :]]


def resize_crop(pair: ScenePair, target_h: int, target_w: int, seed: int, cfg: AugmentConfig | None = None,
                scale: float | None = None, offset: tuple[int, int] | None = None) -> ScenePair:
    """Isotropic rescale then random crop to (target_h, target_w); disparity scales with width."""
    cfg = cfg or AugmentConfig()
    if target_h % 16 or target_w % 16:
        raise InputError(f"crop size {target_h}x{target_w} must be divisible by 16")
    _, h, w = pair.left.shape
    need = max(target_h / h, target_w / w)
    rng = np.random.default_rng(seed)
    if scale is None:
        lo, hi = cfg.scale
        if need > hi:
            raise InputError(f"cannot crop {target_h}x{target_w} from {h}x{w} within scale range {cfg.scale}")
        for _ in range(cfg.max_retries):
            scale = float(rng.uniform(lo, hi))
            if round(h * scale) >= target_h and round(w * scale) >= target_w:
                break
        else:
            scale = float(max(lo, need))
    nh, nw = int(round(h * scale)), int(round(w * scale))
    if nh < target_h or nw < target_w:
        raise InputError(f"scaled size {nh}x{nw} smaller than crop {target_h}x{target_w}")
    if offset is None:
        offset = (int(rng.integers(0, nh - target_h + 1)), int(rng.integers(0, nw - target_w + 1)))
    oy, ox = offset
    sx = nw / w
    sl = (slice(None), slice(oy, oy + target_h), slice(ox, ox + target_w))
    left = _resize(pair.left, nh, nw)[sl]
    right = _resize(pair.right, nh, nw)[sl]
    disp = (_resize(pair.disparity, nh, nw) * np.float32(sx))[sl]
    occ = _resize_nearest(pair.occlusion, nh, nw)[sl]
    rec = {"scale": scale, "scaled_size": [nh, nw], "offset": [oy, ox], "disparity_factor": sx}
    return _record(pair, "resize_crop", rec, left=np.ascontiguousarray(left), right=np.ascontiguousarray(right),
                   disparity=np.ascontiguousarray(disp), occlusion=np.ascontiguousarray(occ))


# --------------------------------------------------------------- pipeline
def augment_pair(pair: ScenePair, seed: int, cfg: AugmentConfig | None = None) -> ScenePair:
    """Chromatic, spatial, occlusion, resize/crop, in that order, each behind its probability gate."""
    cfg = cfg or AugmentConfig()
    cfg.validate()
    gate_rng, *subs = np.random.default_rng(seed).spawn(1 + len(PIPELINE_ORDER))
    sub_seeds = [int(s.integers(0, 2 ** 31)) for s in subs]
    gates = gate_rng.uniform(size=len(PIPELINE_ORDER))
    out = pair
    if gates[0] < cfg.p_chromatic:
        out = chromatic_asymmetric(out, sub_seeds[0], cfg)
    if gates[1] < cfg.p_spatial:
        out = spatial_right_perturb(out, sub_seeds[1], cfg)
    if gates[2] < cfg.p_occlusion:
        out = rect_occlusion(out, sub_seeds[2], cfg)
    if gates[3] < cfg.p_resize_crop:
        th, tw = cfg.crop or out.shape
        out = resize_crop(out, th, tw, sub_seeds[3], cfg)
    return out
