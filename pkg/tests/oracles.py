"""Independent reference implementations used by several test modules."""

from __future__ import annotations

import numpy as np

from cascade_stereo import synth
from cascade_stereo.autograd import gradcheck
from cascade_stereo.synth import SHAPE_FAMILIES, DisparityPlane, FullFrame, Layer, SceneConfig

GRAD_TOL = 1e-4
GRAD_EPS = 1e-4


def assert_grads(fn, arrays, wrt=None, tol=GRAD_TOL):
    errs = gradcheck(fn, arrays, eps=GRAD_EPS, wrt=wrt)
    assert max(errs) < tol, errs
    return errs


def conv2d_loops(x, w, b=None, stride=1, padding=0):
    """Direct seven-loop cross-correlation."""
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for ni in range(n):
        for oi in range(o):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[ni, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[ni, oi, i, j] = np.sum(patch * w[oi]) + (0 if b is None else b[oi])
    return out


def bilinear_point(img, x, y):
    """Zero-padded bilinear read of img (C,H,W) at one point."""
    c, h, w = img.shape
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    out = np.zeros(c)
    for yy, wy in ((y0, 1 - (y - y0)), (y0 + 1, y - y0)):
        for xx, wx in ((x0, 1 - (x - x0)), (x0 + 1, x - x0)):
            if 0 <= yy < h and 0 <= xx < w:
                out += wy * wx * img[:, yy, xx]
    return out


def corr_loops(f1, f2, disp, dx, dy, groups):
    """Group correlation by explicit loops: window entry k samples f2 at (x - disp - dx[k], y + dy[k]).

    f1, f2: (C,H,W); disp: (H,W); dx, dy: (K,) or (K,H,W).  Returns (groups*K, H, W).
    """
    c, h, w = f1.shape
    k = len(dx)
    cg = c // groups
    out = np.zeros((groups * k, h, w))
    for y in range(h):
        for x in range(w):
            for kk in range(k):
                ox = dx[kk] if np.ndim(dx[kk]) == 0 else dx[kk][y, x]
                oy = dy[kk] if np.ndim(dy[kk]) == 0 else dy[kk][y, x]
                s = bilinear_point(f2, x - disp[y, x] - ox, y + oy)
                for g in range(groups):
                    out[g * k + kk, y, x] = np.mean(f1[g * cg:(g + 1) * cg, y, x] * s[g * cg:(g + 1) * cg])
    return out


def zbuffer_occlusion(layers, h, w):
    """Exhaustive z-test: each left pixel is visible iff both right columns around x - d show it frontmost.

    Depth order comes from the disparity values themselves (larger = nearer),
    not from the compositing order used by the renderer; equal depths go to the later layer.
    """
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    best_l = np.full((h, w), -np.inf)
    own = np.full((h, w), -1)
    best_r = np.full((h, w), -np.inf)
    shown = np.full((h, w), -1)
    for k, layer in enumerate(layers):
        inside = layer.shape.contains(xs, ys)
        d = layer.plane(xs, ys)
        win = inside & (d >= best_l)
        best_l[win], own[win] = d[win], k
        src = layer.plane.source_x(xs, ys)
        inside_r = layer.shape.contains(src, ys)
        dr = layer.plane(src, ys)
        win = inside_r & (dr >= best_r)
        best_r[win], shown[win] = dr[win], k
    disp = np.choose(own, [L.plane(xs, ys) for L in layers])
    vis = np.zeros((h, w), dtype=np.uint8)
    for y in range(h):
        for x in range(w):
            t = x - disp[y, x]
            if t < 0 or t > w - 1:
                continue
            cols = {int(np.floor(t)), int(np.ceil(t))}
            vis[y, x] = all(shown[y, u] == own[y, x] for u in cols)
    return vis


def random_config(i: int) -> SceneConfig:
    rng = np.random.default_rng(10_000 + i)
    h, w = [(32, 48), (64, 96), (48, 64), (64, 128)][i % 4]
    d_max = float(rng.uniform(2.0, w / 4 - 0.5))
    fams = tuple(rng.choice(SHAPE_FAMILIES, size=int(rng.integers(1, 6)), replace=False))
    return SceneConfig(height=h, width=w, d_min=float(rng.uniform(0, d_max)), d_max=d_max,
                       layer_count=(int(rng.integers(1, 3)), int(rng.integers(3, 7))), shape_families=fams,
                       distribution=["uniform", "triangular"][i % 2], planar_prob=float(rng.uniform()),
                       seed=i)


def rebuild_layers(manifest):
    """Layers reconstructed from the manifest, independently of the generator's objects."""
    out = []
    for rec in manifest["layers"]:
        out.append(Layer(shape_from(rec["shape"]), synth.Texture(**{**rec["texture"], "components": [
            tuple(c) for c in rec["texture"]["components"]]}), DisparityPlane(**rec["plane"])))
    return out


def shape_from(d):
    fam = d["family"]
    if fam == "full":
        return FullFrame()
    kw = {k: v for k, v in d.items() if k != "family"}
    if fam == "perforated":
        kw["outer"] = shape_from(kw["outer"])
        kw["phase"] = tuple(kw["phase"])
    cls = {"polygon": synth.Polygon, "ellipse": synth.Ellipse, "bar": synth.Bar, "wireframe": synth.Wireframe,
           "perforated": synth.Perforated}[fam]
    return cls(**kw)
