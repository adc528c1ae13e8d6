"""Image preprocessing: loading, resizing, standardization, paired augmentation.

All transforms are pure numpy functions of their inputs; randomness enters
only through an injected generator so fixed seeds give bit-identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .manifest import Manifest

EPS_STD = 1e-7


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel population mean and standard deviation."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self) -> None:
        if self.mean.shape != self.std.shape:
            raise ValueError("mean and std must have matching shapes")
        if np.any(self.std < 0):
            raise ValueError("std entries must be non-negative")


@dataclass(frozen=True)
class AugmentationParams:
    flip_horizontal: bool
    flip_vertical: bool
    rotation_degrees: float

    def __post_init__(self) -> None:
        if abs(self.rotation_degrees) > 10.0:
            raise ValueError(f"rotation must lie in [-10, 10] degrees, got {self.rotation_degrees}")


def load_image(path: str | Path) -> np.ndarray:
    """Load an 8-bit raster as (H, W, 3) float32 in [0, 1]."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    return arr / 255.0


def _resize_bilinear(arr: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    h, w = arr.shape[:2]
    if (h, w) == (target_h, target_w):
        return arr.copy()
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]

    ys = np.clip((np.arange(target_h) + 0.5) * (h / target_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(target_w) + 0.5) * (w / target_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0).astype(arr.dtype)[:, None, None]
    wx = (xs - x0).astype(arr.dtype)[None, :, None]

    top = arr[y0][:, x0] * (1 - wx) + arr[y0][:, x1] * wx
    bottom = arr[y1][:, x0] * (1 - wx) + arr[y1][:, x1] * wx
    out = top * (1 - wy) + bottom * wy
    return out[:, :, 0] if squeeze else out


def _nearest_indices(n_in: int, n_out: int) -> np.ndarray:
    centers = (np.arange(n_out) + 0.5) * (n_in / n_out)
    return np.clip(np.floor(centers).astype(np.int64), 0, n_in - 1)


def _resize_nearest(arr: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    h, w = arr.shape[:2]
    if (h, w) == (target_h, target_w):
        return arr.copy()
    rows = _nearest_indices(h, target_h)
    cols = _nearest_indices(w, target_w)
    return np.ascontiguousarray(arr[rows][:, cols])


def resize_image(img: np.ndarray, target: int) -> np.ndarray:
    """Bilinear resize of an (H, W, C) intensity image to target x target."""
    if target <= 0:
        raise ValueError(f"target size must be positive, got {target}")
    if img.size == 0:
        raise ValueError("cannot resize an empty image")
    return _resize_bilinear(img, target, target)


def resize_mask(grid: np.ndarray, target: int) -> np.ndarray:
    """Nearest-neighbor resize of an (H, W) binary grid; values stay in {0, 1}."""
    if target <= 0:
        raise ValueError(f"target size must be positive, got {target}")
    if grid.size == 0:
        raise ValueError("cannot resize an empty mask")
    return _resize_nearest(grid, target, target)


def compute_channel_stats(manifest: Manifest, image_size: Optional[int] = None) -> ChannelStats:
    """Population mean/std per channel over every pixel of every manifest image.

    When ``image_size`` is given, images are resized first so the statistics
    describe exactly what ``standardize`` will later see.
    """
    if len(manifest) == 0:
        raise ValueError("cannot compute channel statistics on an empty manifest")
    total = np.zeros(3, dtype=np.float64)
    total_sq = np.zeros(3, dtype=np.float64)
    n_pixels = 0
    for record in manifest:
        img = load_image(manifest.resolve(record.image_path))
        if image_size is not None:
            img = resize_image(img, image_size)
        flat = img.reshape(-1, img.shape[2]).astype(np.float64)
        total += flat.sum(axis=0)
        total_sq += np.square(flat).sum(axis=0)
        n_pixels += flat.shape[0]
    mean = total / n_pixels
    var = np.maximum(total_sq / n_pixels - mean**2, 0.0)
    return ChannelStats(mean=mean, std=np.sqrt(var))


def standardize(img: np.ndarray, stats: ChannelStats) -> np.ndarray:
    """Per-channel (x - mean) / max(std, eps)."""
    if img.shape[-1] != stats.mean.shape[0]:
        raise ValueError(
            f"channel mismatch: image has {img.shape[-1]}, stats cover {stats.mean.shape[0]}"
        )
    denom = np.maximum(stats.std, EPS_STD)
    return ((img.astype(np.float64) - stats.mean) / denom).astype(np.float32)


def unstandardize(img: np.ndarray, stats: ChannelStats) -> np.ndarray:
    """Inverse of :func:`standardize` for the same stats."""
    if img.shape[-1] != stats.mean.shape[0]:
        raise ValueError("channel mismatch")
    denom = np.maximum(stats.std, EPS_STD)
    return (img.astype(np.float64) * denom + stats.mean).astype(np.float32)


def save_channel_stats(stats: ChannelStats, path: str | Path) -> None:
    """Write the stats cache: lines ``mean_c <v> ...`` and ``std_c <v> ...``."""
    lines = [
        "mean_c " + " ".join(repr(float(v)) for v in stats.mean),
        "std_c " + " ".join(repr(float(v)) for v in stats.std),
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_channel_stats(path: str | Path) -> ChannelStats:
    values: dict[str, np.ndarray] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        key, *rest = line.split()
        values[key] = np.array([float(v) for v in rest], dtype=np.float64)
    try:
        return ChannelStats(mean=values["mean_c"], std=values["std_c"])
    except KeyError as exc:
        raise ValueError(f"stats cache {path} is missing line {exc}") from None


def sample_augmentation(rng: np.random.Generator) -> AugmentationParams:
    """Draw flips at p=0.5 each and a rotation uniform on [-10, +10] degrees."""
    return AugmentationParams(
        flip_horizontal=bool(rng.random() < 0.5),
        flip_vertical=bool(rng.random() < 0.5),
        rotation_degrees=float(rng.uniform(-10.0, 10.0)),
    )


def per_sample_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator split from (global seed, stream indices); concurrency-safe."""
    parts = (int(seed) % 2**63,) + tuple(int(s) % 2**63 for s in stream)
    return np.random.default_rng(np.random.SeedSequence(parts))


def _rotate(arr: np.ndarray, degrees: float, nearest: bool) -> np.ndarray:
    """Rotate about the image center; out-of-frame pixels are filled with 0."""
    h, w = arr.shape[:2]
    angle = math.radians(degrees)
    cos_a, sin_a = math.cos(angle), math.sin(angle)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    y = rows - cy
    x = cols - cx
    # Inverse map: source location sampled for each output pixel.
    xs = cos_a * x + sin_a * y + cx
    ys = -sin_a * x + cos_a * y + cy

    if nearest:
        xi = np.rint(xs).astype(np.int64)
        yi = np.rint(ys).astype(np.int64)
        valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        out = np.zeros_like(arr)
        out[valid] = arr[yi[valid], xi[valid]]
        return out

    valid = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    xs_c = np.clip(xs, 0, w - 1)
    ys_c = np.clip(ys, 0, h - 1)
    x0 = np.floor(xs_c).astype(np.int64)
    y0 = np.floor(ys_c).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = (xs_c - x0).astype(arr.dtype)
    wy = (ys_c - y0).astype(arr.dtype)
    if arr.ndim == 3:
        wx = wx[..., None]
        wy = wy[..., None]
        valid = valid[..., None]
    top = arr[y0, x0] * (1 - wx) + arr[y0, x1] * wx
    bottom = arr[y1, x0] * (1 - wx) + arr[y1, x1] * wx
    out = top * (1 - wy) + bottom * wy
    return np.where(valid, out, 0).astype(arr.dtype)


def augment(
    img: np.ndarray, mask: Optional[np.ndarray], params: AugmentationParams
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Apply one geometric transform jointly to an image and its optional mask.

    Flips come first, then rotation about the center. The image is
    interpolated bilinearly, the mask nearest-neighbor, so mask values stay
    in {0, 1}.
    """
    if mask is not None and mask.shape[:2] != img.shape[:2]:
        raise ValueError(f"mask dims {mask.shape[:2]} do not match image dims {img.shape[:2]}")

    def _transform(arr: np.ndarray, nearest: bool) -> np.ndarray:
        out = arr
        if params.flip_horizontal:
            out = out[:, ::-1]
        if params.flip_vertical:
            out = out[::-1, :]
        if params.rotation_degrees != 0.0:
            out = _rotate(np.ascontiguousarray(out), params.rotation_degrees, nearest=nearest)
        return np.ascontiguousarray(out)

    out_img = _transform(img, nearest=False)
    out_mask = _transform(mask, nearest=True) if mask is not None else None
    return out_img, out_mask
