"""Image, PFM and visualisation I/O."""

from __future__ import annotations

import os
import re
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InputError


def write_pfm(path: str | os.PathLike, arr: np.ndarray) -> None:
    """Single-channel little-endian PFM ("Pf", negative scale, rows stored bottom-up)."""
    a = np.asarray(arr, dtype=np.float32)
    if a.ndim == 3 and a.shape[0] == 1:
        a = a[0]
    if a.ndim != 2:
        raise InputError(f"PFM writer expects an (H,W) array, got {a.shape}")
    h, w = a.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(np.ascontiguousarray(a[::-1]).astype("<f4").tobytes())


def read_pfm(path: str | os.PathLike) -> np.ndarray:
    """Read a PFM file into (H,W) or (H,W,3) float32, top row first."""
    with open(path, "rb") as f:
        data = f.read()
    m = re.match(rb"(P[Ff])\s+(\d+)\s+(\d+)\s+(\S+)\s", data)
    if not m:
        raise InputError(f"{path}: not a PFM file")
    kind, w, h, scale = m.group(1), int(m.group(2)), int(m.group(3)), float(m.group(4))
    ch = 3 if kind == b"PF" else 1
    dtype = "<f4" if scale < 0 else ">f4"
    body = data[m.end():]
    need = w * h * ch * 4
    if len(body) < need:
        raise InputError(f"{path}: truncated PFM payload")
    arr = np.frombuffer(body[:need], dtype=dtype).reshape(h, w, ch) if ch == 3 else \
        np.frombuffer(body[:need], dtype=dtype).reshape(h, w)
    return np.ascontiguousarray(arr[::-1]).astype(np.float32)


def write_png(path: str | os.PathLike, img: np.ndarray) -> None:
    """(3,H,W) or (H,W) float image in [0,1] -> 8-bit PNG."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 3:
        a = a.transpose(1, 2, 0)
    Image.fromarray(np.clip(np.round(a * 255.0), 0, 255).astype(np.uint8)).save(path)


def read_png(path: str | os.PathLike) -> np.ndarray:
    """Read an RGB image as (3,H,W) float32 in [0,1]."""
    try:
        im = Image.open(path).convert("RGB")
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read image {path}: {exc}") from exc
    return (np.asarray(im, dtype=np.float32) / 255.0).transpose(2, 0, 1).copy()


def write_mask_png(path: str | os.PathLike, mask: np.ndarray) -> None:
    Image.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255).save(path)


def read_mask_png(path: str | os.PathLike) -> np.ndarray:
    return (np.asarray(Image.open(path).convert("L")) > 127).astype(np.uint8)


def read_disparity(path: str | os.PathLike) -> np.ndarray:
    """PFM, or 16-bit KITTI-style PNG (value / 256, zero = invalid)."""
    p = Path(path)
    if p.suffix.lower() == ".pfm":
        return read_pfm(p)
    a = np.asarray(Image.open(p)).astype(np.float32)
    return a / 256.0


def colorize_disparity(disp: np.ndarray, vmax: float | None = None) -> np.ndarray:
    """Map (H,W) disparity to a (3,H,W) colour image in [0,1]."""
    from matplotlib import colormaps

    d = np.asarray(disp, dtype=np.float64)
    if d.ndim == 3:
        d = d[0]
    top = float(vmax) if vmax is not None else float(np.nanmax(d)) if d.size else 1.0
    top = max(top, 1e-6)
    rgb = colormaps["magma"](np.clip(d / top, 0.0, 1.0))[..., :3]
    return rgb.transpose(2, 0, 1).astype(np.float32)
