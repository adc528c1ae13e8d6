"""Synthetic corpus generator: class-patterned masks plus noisy renderings of them.

Images blend each sample's mask pattern with seeded white and low-frequency
noise, so both branches carry class signal but the mask carries it cleanly.
The ``snr`` key scales pattern contrast against total noise power.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .manifest import CLASS_ORDER, Manifest, SampleRecord, load_manifest, save_manifest
from .masks import SpatialMask, synth_mask
from .preprocess import per_sample_rng, resize_image

DEFAULT_SNR = 0.9
_PATTERN_AMPLITUDE = 0.35


@dataclass(frozen=True)
class SynthConfig:
    per_class: int = 100
    image_size: int = 224
    snr: float = DEFAULT_SNR
    seed: int = 0

    def __post_init__(self) -> None:
        if self.per_class < 1:
            raise ValueError("per_class must be >= 1")
        if self.snr <= 0:
            raise ValueError("snr must be positive")


def _low_frequency_field(rng: np.random.Generator, size: int) -> np.ndarray:
    """Unit-variance smooth noise: coarse gaussian grid upsampled bilinearly."""
    coarse = rng.standard_normal((size // 16 + 2, size // 16 + 2)).astype(np.float32)
    field = resize_image(coarse[:, :, None], size)[:, :, 0]
    std = float(field.std())
    return field / std if std > 0 else field


def render_image(mask: SpatialMask, rng: np.random.Generator, snr: float) -> np.ndarray:
    """Render the mask pattern into a noisy uint8 RGB image."""
    size = mask.grid.shape[0]
    base = float(rng.uniform(0.25, 0.5))
    channel_shift = rng.uniform(-0.05, 0.05, size=3).astype(np.float32)
    amplitude = _PATTERN_AMPLITUDE * float(rng.uniform(0.8, 1.2))
    sigma = _PATTERN_AMPLITUDE / snr
    low = _low_frequency_field(rng, size)
    white = rng.standard_normal((size, size, 3)).astype(np.float32)

    img = (
        base
        + channel_shift[None, None, :]
        + amplitude * mask.grid.astype(np.float32)[:, :, None]
        + 0.8 * sigma * white
        + 0.6 * sigma * low[:, :, None]
    )
    return (np.clip(img, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def generate_corpus(out_dir: str | Path, config: SynthConfig) -> Manifest:
    """Write images/, masks/, and manifest.csv; returns the re-loaded manifest.

    Output is byte-identical for identical (out_dir, config).
    """
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)

    records = []
    for label in CLASS_ORDER:
        for i in range(config.per_class):
            rng = per_sample_rng(config.seed, int(label), i)
            mask = synth_mask(label, rng, (config.image_size, config.image_size))
            image = render_image(mask, rng, config.snr)

            name = f"{label.name}_{i:04d}.png"
            Image.fromarray(image, mode="RGB").save(out_dir / "images" / name)
            Image.fromarray(mask.grid * 255, mode="L").save(out_dir / "masks" / name)
            records.append(
                SampleRecord(
                    image_path=f"images/{name}",
                    mask_path=f"masks/{name}",
                    label=label,
                )
            )

    manifest = Manifest(records=tuple(records), source_id=f"synth:{config.seed}", root=out_dir)
    save_manifest(manifest, out_dir / "manifest.csv")
    return load_manifest(out_dir / "manifest.csv")
