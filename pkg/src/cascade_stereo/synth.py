"""Procedural layered stereo scenes with exact dense disparity and occlusion.

A scene is a back-to-front stack of layers.  Each layer has a shape defined
on continuous coordinates, a smooth procedural texture and a planar
disparity ``d(x, y) = a + b*x + c*y`` expressed in left-view pixels.  The
right view is rendered analytically: right pixel ``u`` on row ``y`` shows
layer ``k`` at the left coordinate ``x = (u + a + c*y) / (1 - b)`` provided
the shape contains that point and no later (nearer) layer does too.

Textures are band-limited so that their second x-derivative is at most
``TEXTURE_CURVATURE``; linear interpolation between neighbouring right
pixels then reproduces the left value to well within 2/255.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, GenerationError, InputError

TEXTURE_CURVATURE = 0.05
SHAPE_FAMILIES = ("polygon", "ellipse", "bar", "wireframe", "perforated")
TEXTURE_KINDS = ("noise", "pattern", "flat", "gradient")


# ------------------------------------------------------------------ shapes
class Shape:
    family = "shape"

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def bbox(self) -> tuple[float, float, float, float]:
        """(x_min, y_min, x_max, y_max)."""
        raise NotImplementedError

    def describe(self) -> dict:
        return {"family": self.family}


class FullFrame(Shape):
    family = "full"

    def contains(self, x, y):
        return np.ones(np.broadcast(x, y).shape, dtype=bool)

    def bbox(self):
        return (-np.inf, -np.inf, np.inf, np.inf)


def _rotate(x, y, cx, cy, theta):
    c, s = np.cos(theta), np.sin(theta)
    dx, dy = x - cx, y - cy
    return c * dx + s * dy, -s * dx + c * dy


@dataclass
class Ellipse(Shape):
    cx: float
    cy: float
    a: float
    b: float
    theta: float = 0.0
    family = "ellipse"

    def contains(self, x, y):
        u, v = _rotate(x, y, self.cx, self.cy, self.theta)
        return (u / self.a) ** 2 + (v / self.b) ** 2 <= 1.0

    def bbox(self):
        r = max(self.a, self.b)
        return (self.cx - r, self.cy - r, self.cx + r, self.cy + r)

    def describe(self):
        return {"family": self.family, **asdict(self)}


@dataclass
class Bar(Shape):
    """Thin rotated rectangle."""

    cx: float
    cy: float
    length: float
    width: float
    theta: float = 0.0
    family = "bar"

    def contains(self, x, y):
        u, v = _rotate(x, y, self.cx, self.cy, self.theta)
        return (np.abs(u) <= self.length / 2) & (np.abs(v) <= self.width / 2)

    def bbox(self):
        r = 0.5 * np.hypot(self.length, self.width)
        return (self.cx - r, self.cy - r, self.cx + r, self.cy + r)

    def describe(self):
        return {"family": self.family, **asdict(self)}


def _point_in_polygon(x, y, vx, vy):
    inside = np.zeros(np.broadcast(x, y).shape, dtype=bool)
    n = len(vx)
    for i in range(n):
        x1, y1, x2, y2 = vx[i], vy[i], vx[(i + 1) % n], vy[(i + 1) % n]
        if y1 == y2:
            continue
        crosses = (y1 > y) != (y2 > y)
        xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xint)
    return inside


def _distance_to_polyline(x, y, vx, vy):
    best = np.full(np.broadcast(x, y).shape, np.inf)
    n = len(vx)
    for i in range(n):
        x1, y1, x2, y2 = vx[i], vy[i], vx[(i + 1) % n], vy[(i + 1) % n]
        ex, ey = x2 - x1, y2 - y1
        t = np.clip(((x - x1) * ex + (y - y1) * ey) / (ex * ex + ey * ey), 0.0, 1.0)
        best = np.minimum(best, np.hypot(x - (x1 + t * ex), y - (y1 + t * ey)))
    return best


@dataclass
class Polygon(Shape):
    vx: list[float]
    vy: list[float]
    family = "polygon"

    def contains(self, x, y):
        return _point_in_polygon(x, y, self.vx, self.vy)

    def bbox(self):
        return (min(self.vx), min(self.vy), max(self.vx), max(self.vy))

    def describe(self):
        return {"family": self.family, "vx": list(self.vx), "vy": list(self.vy)}


@dataclass
class Wireframe(Polygon):
    """Polygon outline of a given thickness (open-work structure)."""

    thickness: float = 2.0
    family = "wireframe"

    def contains(self, x, y):
        return _distance_to_polyline(x, y, self.vx, self.vy) <= self.thickness / 2

    def bbox(self):
        t = self.thickness / 2
        return (min(self.vx) - t, min(self.vy) - t, max(self.vx) + t, max(self.vy) + t)

    def describe(self):
        return {**super().describe(), "thickness": self.thickness}


@dataclass
class Perforated(Shape):
    """Ellipse with a lattice of circular holes."""

    outer: Ellipse
    hole_radius: float
    pitch: float
    phase: tuple[float, float] = (0.0, 0.0)
    family = "perforated"

    def contains(self, x, y):
        u = np.mod(x - self.outer.cx + self.phase[0], self.pitch) - self.pitch / 2
        v = np.mod(y - self.outer.cy + self.phase[1], self.pitch) - self.pitch / 2
        return self.outer.contains(x, y) & (u * u + v * v > self.hole_radius ** 2)

    def bbox(self):
        return self.outer.bbox()

    def describe(self):
        return {"family": self.family, "outer": self.outer.describe(), "hole_radius": self.hole_radius,
                "pitch": self.pitch, "phase": list(self.phase)}


# ----------------------------------------------------------------- textures
@dataclass
class Texture:
    """RGB = colour0 + (colour1 - colour0) * s(x, y), s a bounded sum of sinusoids.

    Each component is ``amp * sin(kx*x + ky*y + phase)`` or, for ``product``
    components, ``amp * sin(kx*x + phase) * sin(ky*y + phase2)``.
    """

    kind: str
    colour0: tuple[float, float, float]
    colour1: tuple[float, float, float]
    components: list[tuple] = field(default_factory=list)

    def scalar(self, x, y):
        s = np.full(np.broadcast(x, y).shape, 0.5)
        for comp in self.components:
            if comp[0] == "wave":
                _, amp, kx, ky, ph = comp
                s = s + amp * np.sin(kx * x + ky * y + ph)
            else:
                _, amp, kx, ky, ph, ph2 = comp
                s = s + amp * np.sin(kx * x + ph) * np.sin(ky * y + ph2)
        return s

    def rgb(self, x, y) -> np.ndarray:
        s = self.scalar(x, y)
        c0 = np.asarray(self.colour0)[:, None]
        c1 = np.asarray(self.colour1)[:, None]
        return c0 + (c1 - c0) * s.reshape(1, -1)

    def curvature_bound(self) -> float:
        """Upper bound on |d^2 rgb / dx^2| over all channels."""
        span = float(np.abs(np.subtract(self.colour1, self.colour0)).max())
        return span * float(sum(abs(c[1]) * c[2] ** 2 for c in self.components))

    def describe(self) -> dict:
        return {"kind": self.kind, "colour0": list(self.colour0), "colour1": list(self.colour1),
                "components": [list(c) for c in self.components]}


def _normalise_components(comps: list[tuple], curvature: float, colour_span: float) -> list[tuple]:
    """Scale amplitudes so s stays in [0, 1] and |d^2 rgb / dx^2| <= curvature."""
    total = sum(abs(c[1]) for c in comps)
    curv = sum(abs(c[1]) * c[2] ** 2 for c in comps) * max(colour_span, 1e-12)
    scale = min(0.5 / total, curvature / curv) if total > 0 else 1.0
    return [(c[0], c[1] * scale) + tuple(c[2:]) for c in comps]


def _colour_pair(rng: np.random.Generator, min_sep: float = 0.35):
    while True:
        c0, c1 = rng.uniform(0.0, 1.0, 3), rng.uniform(0.0, 1.0, 3)
        if np.abs(c1 - c0).mean() >= min_sep:
            return tuple(float(v) for v in c0), tuple(float(v) for v in c1)


def random_texture(rng: np.random.Generator, kind: str, width: int, curvature: float = TEXTURE_CURVATURE) -> Texture:
    c0, c1 = _colour_pair(rng)
    comps: list[tuple] = []
    if kind == "noise":
        for _ in range(6):
            lam = float(np.exp(rng.uniform(np.log(8.0), np.log(32.0))))
            theta = float(rng.uniform(0, np.pi))
            k = 2 * np.pi / lam
            comps.append(("wave", float(rng.uniform(0.5, 1.0)), k * np.cos(theta), k * np.sin(theta),
                          float(rng.uniform(0, 2 * np.pi))))
    elif kind == "pattern":
        lam_x = float(rng.uniform(10.0, 20.0))
        lam_y = float(rng.uniform(4.0, 16.0))
        comps.append(("product", 0.5, 2 * np.pi / lam_x, 2 * np.pi / lam_y,
                      float(rng.uniform(0, 2 * np.pi)), float(rng.uniform(0, 2 * np.pi))))
    elif kind == "gradient":
        lam = 4.0 * width
        theta = float(rng.uniform(0, 2 * np.pi))
        k = 2 * np.pi / lam
        comps.append(("wave", 0.5, k * np.cos(theta), k * np.sin(theta), float(rng.uniform(0, 2 * np.pi))))
    elif kind != "flat":
        raise ConfigError(f"unknown texture kind {kind!r}")
    span = float(np.abs(np.subtract(c1, c0)).max())
    return Texture(kind, c0, c1, _normalise_components(comps, curvature, span))


# ------------------------------------------------------------------ layers
@dataclass
class DisparityPlane:
    a: float
    b: float = 0.0
    c: float = 0.0

    def __call__(self, x, y):
        return self.a + self.b * x + self.c * y

    def source_x(self, u, y):
        """Left x shown at right column u (inverse of x -> x - d(x, y))."""
        return (u + self.a + self.c * y) / (1.0 - self.b)


@dataclass
class Layer:
    shape: Shape
    texture: Texture
    plane: DisparityPlane

    def describe(self) -> dict:
        return {"shape": self.shape.describe(), "texture": self.texture.describe(), "plane": asdict(self.plane)}


@dataclass
class ScenePair:
    left: np.ndarray  # (3,H,W) float32 in [0,1]
    right: np.ndarray  # (3,H,W)
    disparity: np.ndarray  # (1,H,W) float32
    occlusion: np.ndarray  # (1,H,W) uint8, 1 = visible in both views
    manifest: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.left.shape[-2:]

    def replace(self, **kw) -> "ScenePair":
        d = {"left": self.left, "right": self.right, "disparity": self.disparity, "occlusion": self.occlusion,
             "manifest": dict(self.manifest)}
        d.update(kw)
        return ScenePair(**d)


def _labels(layers: Sequence[Layer], xs_fn, h: int, w: int) -> tuple[np.ndarray, list[np.ndarray]]:
    ys, us = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    label = np.full((h, w), -1, dtype=np.int64)
    sources = []
    for k, layer in enumerate(layers):
        xs = xs_fn(layer, us, ys)
        sources.append(xs)
        label[layer.shape.contains(xs, ys)] = k
    return label, sources


def render_layers(layers: Sequence[Layer], h: int, w: int, manifest: dict | None = None) -> ScenePair:
    """Composite ``layers`` (farthest first) into an exact stereo pair."""
    if not layers:
        raise InputError("need at least one layer")
    for layer in layers:
        if not layer.plane.b < 0.5:
            raise InputError("disparity slope along x must be below 0.5")
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    left_label, _ = _labels(layers, lambda L, u, y: u, h, w)
    right_label, right_src = _labels(layers, lambda L, u, y: L.plane.source_x(u, y), h, w)
    if (left_label < 0).any() or (right_label < 0).any():
        raise GenerationError("layers do not cover the frame; include a full-frame background")
    left = np.zeros((3, h, w))
    right = np.zeros((3, h, w))
    disp = np.zeros((h, w))
    for k, layer in enumerate(layers):
        m = left_label == k
        if m.any():
            left[:, m] = layer.texture.rgb(xs[m], ys[m])
            disp[m] = layer.plane(xs[m], ys[m])
        mr = right_label == k
        if mr.any():
            right[:, mr] = layer.texture.rgb(right_src[k][mr], ys[mr])
    occ = visibility_mask(disp, left_label, right_label)
    return ScenePair(left.astype(np.float32), right.astype(np.float32), disp[None].astype(np.float32),
                     occ[None].astype(np.uint8), manifest or {})


def visibility_mask(disp: np.ndarray, left_label: np.ndarray, right_label: np.ndarray) -> np.ndarray:
    """1 where the left pixel's right-view footprint (both neighbouring columns) shows the same layer."""
    h, w = disp.shape
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    target = xs - disp
    inside = (target >= 0) & (target <= w - 1)
    u0 = np.clip(np.floor(target), 0, w - 1).astype(np.int64)
    u1 = np.clip(np.ceil(target), 0, w - 1).astype(np.int64)
    same = (right_label[ys, u0] == left_label) & (right_label[ys, u1] == left_label)
    return inside & same


# ---------------------------------------------------------------- sampling
@dataclass
class SceneConfig:
    height: int = 64
    width: int = 96
    layer_count: tuple[int, int] = (2, 5)
    shape_families: tuple[str, ...] = SHAPE_FAMILIES
    texture_kinds: tuple[str, ...] = TEXTURE_KINDS
    texture_weights: tuple[float, ...] = (0.55, 0.2, 0.1, 0.15)
    d_min: float = 2.0
    d_max: float = 22.0
    distribution: str = "uniform"
    planar_prob: float = 0.5
    max_slope: float = 0.05
    compute_occlusion: bool = True
    max_retries: int = 50
    seed: int = 0

    def validate(self) -> None:
        if self.d_min < 0:
            raise ConfigError("d_min must be >= 0")
        if self.d_max < self.d_min:
            raise ConfigError("d_max must be >= d_min")
        if not self.d_max < self.width / 4:
            raise ConfigError(f"d_max {self.d_max} must be below width/4 = {self.width / 4}")
        lo, hi = self.layer_count
        if lo < 1 or hi < lo:
            raise ConfigError("layer_count must satisfy 1 <= min <= max")
        if self.distribution not in ("uniform", "triangular"):
            raise ConfigError(f"unknown disparity distribution {self.distribution!r}")
        for fam in self.shape_families:
            if fam not in SHAPE_FAMILIES:
                raise ConfigError(f"unknown shape family {fam!r}")
        for kind in self.texture_kinds:
            if kind not in TEXTURE_KINDS:
                raise ConfigError(f"unknown texture kind {kind!r}")
        if len(self.texture_weights) != len(self.texture_kinds):
            raise ConfigError("texture_weights must match texture_kinds")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_count"] = list(self.layer_count)
        for key in ("shape_families", "texture_kinds", "texture_weights"):
            d[key] = list(d[key])
        return d


@dataclass
class Placement:
    family: str
    disparity: float
    extent: float  # fraction of min(H, W) spanned by the object


def sample_disparities(cfg: SceneConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    if cfg.d_max == cfg.d_min:
        return np.full(n, float(cfg.d_min))
    if cfg.distribution == "uniform":
        return rng.uniform(cfg.d_min, cfg.d_max, n)
    return rng.triangular(cfg.d_min, 0.5 * (cfg.d_min + cfg.d_max), cfg.d_max, n)


def sample_placements(cfg: SceneConfig, rng: np.random.Generator | None = None) -> list[Placement]:
    """Background plus objects, sorted far-to-near; nearer objects are drawn smaller."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    n = int(rng.integers(cfg.layer_count[0], cfg.layer_count[1] + 1))
    disps = np.sort(sample_disparities(cfg, n, rng))
    span = max(cfg.d_max - cfg.d_min, 1e-9)
    out = [Placement("full", float(disps[0]), 1.0)]
    for d in disps[1:]:
        fam = str(rng.choice(cfg.shape_families))
        nearness = (d - cfg.d_min) / span
        extent = float(rng.uniform(0.25, 0.6) * (1.0 - 0.4 * nearness))
        out.append(Placement(fam, float(d), extent))
    return out


def _make_shape(fam: str, cx: float, cy: float, size: float, rng: np.random.Generator) -> Shape:
    theta = float(rng.uniform(0, np.pi))
    if fam == "ellipse":
        return Ellipse(cx, cy, size / 2, float(size / 2 * rng.uniform(0.4, 1.0)), theta)
    if fam == "bar":
        return Bar(cx, cy, size, float(rng.uniform(2.0, 5.0)), theta)
    if fam in ("polygon", "wireframe"):
        nv = int(rng.integers(3, 8))
        ang = np.sort(rng.uniform(0, 2 * np.pi, nv))
        rad = size / 2 * rng.uniform(0.5, 1.0, nv)
        vx = list(map(float, cx + rad * np.cos(ang)))
        vy = list(map(float, cy + rad * np.sin(ang)))
        if fam == "wireframe":
            return Wireframe(vx, vy, thickness=float(rng.uniform(2.0, 4.0)))
        return Polygon(vx, vy)
    if fam == "perforated":
        outer = Ellipse(cx, cy, size / 2, float(size / 2 * rng.uniform(0.6, 1.0)), theta)
        pitch = float(rng.uniform(7.0, 12.0))
        return Perforated(outer, float(pitch * rng.uniform(0.2, 0.35)), pitch,
                          (float(rng.uniform(0, pitch)), float(rng.uniform(0, pitch))))
    raise ConfigError(f"unknown shape family {fam!r}")


def _make_plane(d0: float, cx: float, cy: float, cfg: SceneConfig, rng: np.random.Generator, planar: bool):
    if not planar:
        return DisparityPlane(d0)
    b, c = (float(v) for v in rng.uniform(-cfg.max_slope, cfg.max_slope, 2))
    # keep d within [d_min, d_max] over the whole pixel grid
    for _ in range(30):
        corners = [d0 + b * (x - cx) + c * (y - cy) for x in (0, cfg.width - 1) for y in (0, cfg.height - 1)]
        if min(corners) >= cfg.d_min and max(corners) <= cfg.d_max:
            break
        b, c = b * 0.5, c * 0.5
    else:
        b = c = 0.0
    return DisparityPlane(d0 - b * cx - c * cy, b, c)


def _in_front(layer: Layer, behind: Sequence[Layer], h: int, w: int) -> bool:
    """Painter's order must agree with depth: ``layer`` is no farther than any earlier layer it overlaps,
    in both views, on the pixel grid."""
    ys, us = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    m_left = layer.shape.contains(us, ys)
    d_left = layer.plane(us, ys)
    src = layer.plane.source_x(us, ys)
    m_right = layer.shape.contains(src, ys)
    d_right = layer.plane(src, ys)
    for other in behind:
        both = m_left & other.shape.contains(us, ys)
        if (d_left[both] < other.plane(us[both], ys[both])).any():
            return False
        osrc = other.plane.source_x(us, ys)
        both = m_right & other.shape.contains(osrc, ys)
        if (d_right[both] < other.plane(osrc[both], ys[both])).any():
            return False
    return True


def generate_scene(cfg: SceneConfig, seed: int | None = None) -> ScenePair:
    """Sample placements, shapes and textures and render an exact pair."""
    cfg.validate()
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    h, w = cfg.height, cfg.width
    placements = sample_placements(cfg, rng)
    weights = np.asarray(cfg.texture_weights, dtype=np.float64)
    weights = weights / weights.sum()
    layers = []
    for pi, pl in enumerate(placements):
        kind = str(rng.choice(cfg.texture_kinds, p=weights))
        tex = random_texture(rng, kind, w)
        planar = bool(rng.uniform() < cfg.planar_prob)
        if pl.family == "full":
            plane = _make_plane(pl.disparity, (w - 1) / 2, (h - 1) / 2, cfg, rng, planar)
            layers.append(Layer(FullFrame(), tex, plane))
            continue
        size = pl.extent * min(h, w)
        for _attempt in range(cfg.max_retries):
            cx = float(rng.uniform(0, w - 1))
            cy = float(rng.uniform(0, h - 1))
            shape = _make_shape(pl.family, cx, cy, size, rng)
            x0, y0, x1, y1 = shape.bbox()
            # reject shapes that would not fit the frame after the shift, or miss it entirely
            if not ((x1 - x0) + pl.disparity < w and x1 - pl.disparity > 0 and x0 < w - 1 and y1 > 0
                    and y0 < h - 1):
                continue
            plane = _make_plane(pl.disparity, cx, cy, cfg, rng, planar)
            if not _in_front(Layer(shape, tex, plane), layers, h, w):
                plane = DisparityPlane(pl.disparity)
            if _in_front(Layer(shape, tex, plane), layers, h, w):
                break
        else:
            raise GenerationError(f"could not place layer {pi} ({pl.family}) after {cfg.max_retries} tries")
        layers.append(Layer(shape, tex, plane))
    manifest = {"seed": int(seed), "height": h, "width": w, "layers": [L.describe() for L in layers]}
    pair = render_layers(layers, h, w, manifest)
    if not cfg.compute_occlusion:
        pair = pair.replace(occlusion=np.ones_like(pair.occlusion))
    return pair


def photometric_residual(pair: ScenePair) -> np.ndarray:
    """|right(x - d, y) - left(x, y)| per pixel (max over channels), right read by linear interpolation."""
    _, h, w = pair.left.shape
    d = pair.disparity[0].astype(np.float64)
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    t = np.clip(xs - d, 0, w - 1)
    u0 = np.floor(t).astype(np.int64)
    u1 = np.minimum(u0 + 1, w - 1)
    f = t - u0
    r = pair.right.astype(np.float64)
    warped = r[:, ys, u0] * (1 - f) + r[:, ys, u1] * f
    return np.abs(warped - pair.left).max(axis=0)


def check_photometric(pair: ScenePair, tol: float = 2.0 / 255.0) -> bool:
    vis = pair.occlusion[0].astype(bool)
    return bool((photometric_residual(pair)[vis] <= tol).all())


# ---------------------------------------------------------------- datasets
def scene_filenames(index: int) -> dict[str, str]:
    return {"left": f"left_{index:06d}.png", "right": f"right_{index:06d}.png",
            "disparity": f"disp_{index:06d}.pfm", "occlusion": f"occ_{index:06d}.png"}


def dataset_build(cfg: SceneConfig, count: int, out_dir: str | os.PathLike) -> list[dict]:
    """Write ``count`` scenes plus ``manifest.jsonl``; already complete indices are skipped."""
    from .io import write_mask_png, write_pfm, write_png

    if count < 1:
        raise InputError("count must be >= 1")
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.jsonl"
    done: dict[int, dict] = {}
    if manifest_path.exists():
        for line in manifest_path.read_text().splitlines():
            if line.strip():
                rec = json.loads(line)
                if all((out / f).exists() for f in rec["files"].values()):
                    done[rec["index"]] = rec
    records = []
    with open(manifest_path, "a") as mf:
        for i in range(count):
            if i in done:
                records.append(done[i])
                continue
            names = scene_filenames(i)
            try:
                pair = generate_scene(cfg, seed=cfg.seed + i)
                write_png(out / names["left"], pair.left)
                write_png(out / names["right"], pair.right)
                write_pfm(out / names["disparity"], pair.disparity[0])
                write_mask_png(out / names["occlusion"], pair.occlusion[0])
            except OSError as exc:
                raise OSError(f"scene {i}: {exc}") from exc
            rec = {"index": i, "seed": cfg.seed + i, "files": names, "scene": pair.manifest}
            mf.write(json.dumps(rec, sort_keys=True) + "\n")
            mf.flush()
            records.append(rec)
    with open(manifest_path, "w") as mf:
        for rec in records:
            mf.write(json.dumps(rec, sort_keys=True) + "\n")
    return records


def load_scene(directory: str | os.PathLike, index: int) -> ScenePair:
    from .io import read_mask_png, read_pfm, read_png

    d = Path(directory)
    names = scene_filenames(index)
    occ_path = d / names["occlusion"]
    disp = read_pfm(d / names["disparity"])
    occ = read_mask_png(occ_path) if occ_path.exists() else np.ones(disp.shape, dtype=np.uint8)
    return ScenePair(read_png(d / names["left"]), read_png(d / names["right"]), disp[None], occ[None].astype(np.uint8),
                     {"index": index})


def list_scene_indices(directory: str | os.PathLike, prefix: str = "disp_") -> list[int]:
    out = []
    for p in Path(directory).glob(f"{prefix}*.pfm"):
        try:
            out.append(int(p.stem[len(prefix):]))
        except ValueError:
            continue
    return sorted(out)
