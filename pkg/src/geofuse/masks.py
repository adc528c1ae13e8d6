"""Binary spatial masks: file ingestion, land-cover rasterization, synthetic patterns.

The mask is the knowledge channel of the model: a {0, 1} grid co-registered
with the image tile. Masks may arrive precomputed (files), be derived from a
land-cover code grid, or be synthesized with class-distinctive geometry for
controlled experiments.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from PIL import Image

from .manifest import ClassLabel
from .preprocess import resize_mask

MASK_SOURCES = ("file", "landcover", "synthetic")


class MaskError(ValueError):
    """Invalid mask or land-cover input."""


@dataclass(frozen=True)
class SpatialMask:
    grid: np.ndarray  # (H, W) uint8, values in {0, 1}
    source: str

    def __post_init__(self) -> None:
        if self.source not in MASK_SOURCES:
            raise MaskError(f"unknown mask source {self.source!r}")
        if self.grid.ndim != 2:
            raise MaskError(f"mask grid must be 2-D, got shape {self.grid.shape}")


@dataclass(frozen=True)
class LandCoverGrid:
    codes: np.ndarray  # (H, W) integer class codes
    code_book: dict[int, str]

    def __post_init__(self) -> None:
        present = set(int(v) for v in np.unique(self.codes))
        missing = present - set(self.code_book)
        if missing:
            raise MaskError(f"land-cover codes missing from code book: {sorted(missing)}")


def load_mask(path: str | Path, expected: tuple[int, int]) -> SpatialMask:
    """Load an 8-bit single-channel mask file with values {0, 255}.

    Values map 0 -> 0 and 255 -> 1; the grid is nearest-neighbor resized to
    ``expected`` (height, width) when it does not already match.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"mask file not found: {path}")
    with Image.open(path) as img:
        if img.mode == "1":
            img = img.convert("L")
        if img.mode != "L":
            raise MaskError(f"mask {path} is not single-channel 8-bit (mode {img.mode})")
        arr = np.asarray(img, dtype=np.uint8)
    bad = np.unique(arr[(arr != 0) & (arr != 255)])
    if bad.size:
        raise MaskError(f"mask {path} contains value {int(bad[0])} outside {{0, 255}}")
    grid = (arr == 255).astype(np.uint8)
    if grid.shape != tuple(expected):
        grid = resize_mask(grid, expected[0])
    return SpatialMask(grid=grid, source="file")


def load_code_book(path: str | Path) -> dict[int, str]:
    """Parse a code book file: one ``<code> <name>`` entry per line."""
    book: dict[int, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split(maxsplit=1)
        if len(parts) != 2:
            raise MaskError(f"{path}:{lineno}: expected '<code> <name>'")
        try:
            book[int(parts[0])] = parts[1].strip()
        except ValueError:
            raise MaskError(f"{path}:{lineno}: code {parts[0]!r} is not an integer") from None
    return book


def load_landcover(path: str | Path, code_book: Optional[dict[int, str]] = None) -> LandCoverGrid:
    """Load an 8- or 16-bit single-channel land-cover raster.

    Without an explicit code book, one is derived from the codes present.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"land-cover file not found: {path}")
    with Image.open(path) as img:
        if img.mode not in ("L", "I", "I;16"):
            raise MaskError(f"land-cover {path} is not single-channel (mode {img.mode})")
        codes = np.asarray(img, dtype=np.int64)
    if code_book is None:
        code_book = {int(v): f"code-{int(v)}" for v in np.unique(codes)}
    return LandCoverGrid(codes=codes, code_book=dict(code_book))


def rasterize_landcover(
    lc: LandCoverGrid, relevant_codes: Iterable[int], expected: tuple[int, int]
) -> SpatialMask:
    """Membership mask: cell = 1 iff its land-cover code is in ``relevant_codes``."""
    codes = frozenset(int(c) for c in relevant_codes)
    if not codes:
        raise MaskError("relevant_codes must be non-empty")
    grid = np.isin(lc.codes, sorted(codes)).astype(np.uint8)
    if grid.shape != tuple(expected):
        grid = resize_mask(grid, expected[0])
    return SpatialMask(grid=grid, source="landcover")


def mask_coverage(mask: SpatialMask) -> float:
    """Fraction of on cells, in [0, 1]."""
    return float(mask.grid.mean())


# --- synthetic mask families ------------------------------------------------
#
# Each class gets a geometrically distinctive binary pattern so that mask
# statistics (coverage, component count) separate the classes. The family is
# a pure function of the label; all randomness comes from the caller's rng.


def _coord_grids(dims: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    h, w = dims
    return np.meshgrid(np.arange(h) + 0.5, np.arange(w) + 0.5, indexing="ij")


def _wind_discs(rng: np.random.Generator, dims: tuple[int, int]) -> np.ndarray:
    # 3..8 disjoint small discs, one per chosen cell of a 4x4 placement grid.
    h, w = dims
    s = min(h, w)
    yy, xx = _coord_grids(dims)
    k = int(rng.integers(3, 9))
    cells = rng.choice(16, size=k, replace=False)
    grid = np.zeros(dims, dtype=np.uint8)
    cell_h, cell_w = h / 4.0, w / 4.0
    for cell in cells:
        ci, cj = divmod(int(cell), 4)
        radius = float(rng.uniform(0.028, 0.055)) * s
        cy = (ci + 0.5) * cell_h + float(rng.uniform(-0.12, 0.12)) * cell_h
        cx = (cj + 0.5) * cell_w + float(rng.uniform(-0.12, 0.12)) * cell_w
        grid |= ((yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2).astype(np.uint8)
    return grid


def _solar_grid(rng: np.random.Generator, dims: tuple[int, int]) -> np.ndarray:
    # Axis-aligned grid of filled rectangles (panel array look).
    h, w = dims
    yy, xx = _coord_grids(dims)
    n_rows = int(rng.integers(3, 6))
    n_cols = int(rng.integers(3, 6))
    fill_y = float(rng.uniform(0.45, 0.58))
    fill_x = float(rng.uniform(0.45, 0.58))
    pitch_y, pitch_x = h / n_rows, w / n_cols
    phase_y = ((yy + float(rng.uniform(0, pitch_y))) % pitch_y) / pitch_y
    phase_x = ((xx + float(rng.uniform(0, pitch_x))) % pitch_x) / pitch_x
    return ((phase_y < fill_y) & (phase_x < fill_x)).astype(np.uint8)


def _single_blob(rng: np.random.Generator, dims: tuple[int, int]) -> np.ndarray:
    # One large wobbly-edged blob near the center.
    h, w = dims
    s = min(h, w)
    yy, xx = _coord_grids(dims)
    cy = h / 2.0 + float(rng.uniform(-0.08, 0.08)) * h
    cx = w / 2.0 + float(rng.uniform(-0.08, 0.08)) * w
    a = float(rng.uniform(0.18, 0.27)) * s
    b = float(rng.uniform(0.18, 0.27)) * s
    phi0 = float(rng.uniform(0, 2 * np.pi))
    phi1 = float(rng.uniform(0, 2 * np.pi))
    theta = np.arctan2(yy - cy, xx - cx)
    wobble = 1.0 + 0.12 * np.sin(3 * theta + phi0) + 0.08 * np.sin(5 * theta + phi1)
    rho = np.sqrt(((xx - cx) / a) ** 2 + ((yy - cy) / b) ** 2)
    return (rho <= wobble).astype(np.uint8)


def _two_stripes(rng: np.random.Generator, dims: tuple[int, int]) -> np.ndarray:
    # Two parallel full-frame stripes (pipeline corridor look).
    h, w = dims
    s = min(h, w)
    yy, xx = _coord_grids(dims)
    theta = float(rng.uniform(0, np.pi))
    width = float(rng.uniform(0.05, 0.085)) * s
    separation = float(rng.uniform(0.2, 0.3)) * s
    proj = np.cos(theta) * (xx - w / 2.0) + np.sin(theta) * (yy - h / 2.0)
    near = np.abs(proj + separation / 2.0) < width / 2.0
    far = np.abs(proj - separation / 2.0) < width / 2.0
    return (near | far).astype(np.uint8)


def _half_plane(rng: np.random.Generator, dims: tuple[int, int]) -> np.ndarray:
    # One side of a random line filled; coverage held in [0.4, 0.6].
    h, w = dims
    yy, xx = _coord_grids(dims)
    theta = float(rng.uniform(0, 2 * np.pi))
    target = float(rng.uniform(0.42, 0.58))
    proj = np.cos(theta) * (xx - w / 2.0) + np.sin(theta) * (yy - h / 2.0)
    threshold = np.quantile(proj, target)
    return (proj <= threshold).astype(np.uint8)


_FAMILIES = {
    ClassLabel.WND: _wind_discs,
    ClassLabel.SUN: _solar_grid,
    ClassLabel.BIT: _single_blob,
    ClassLabel.NG: _two_stripes,
    ClassLabel.WAT: _half_plane,
}


def synth_mask(
    label: ClassLabel, rng: np.random.Generator, dims: tuple[int, int] = (224, 224)
) -> SpatialMask:
    """Class-distinctive synthetic binary mask; the family depends only on the label."""
    grid = _FAMILIES[label](rng, tuple(dims))
    return SpatialMask(grid=grid, source="synthetic")
