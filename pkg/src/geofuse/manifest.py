"""Sample catalog: class labels, manifest files, and stratified splitting."""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

MANIFEST_HEADER = "image_path,mask_path,label,split"


class ManifestError(ValueError):
    """Unreadable or schema-violating manifest content."""


class ClassLabel(enum.IntEnum):
    """The five power plant categories; the integer value is the class index."""

    WND = 0
    SUN = 1
    BIT = 2
    NG = 3
    WAT = 4

    @property
    def display_name(self) -> str:
        return _DISPLAY_NAMES[self]

    @classmethod
    def from_code(cls, code: str) -> "ClassLabel":
        try:
            return cls[code]
        except KeyError:
            raise ManifestError(f"unknown label code {code!r}") from None


_DISPLAY_NAMES = {
    ClassLabel.WND: "Wind",
    ClassLabel.SUN: "Solar",
    ClassLabel.BIT: "Biomass/Coal",
    ClassLabel.NG: "Natural Gas",
    ClassLabel.WAT: "Hydroelectric",
}

CLASS_ORDER: tuple[ClassLabel, ...] = tuple(ClassLabel)

_SPLIT_VALUES = ("train", "test")


@dataclass(frozen=True)
class SampleRecord:
    """One catalog row: an image, its optional mask, and the ground-truth label."""

    image_path: str
    label: ClassLabel
    mask_path: Optional[str] = None
    split: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.image_path:
            raise ManifestError("image_path must be non-empty")
        if self.split is not None and self.split not in _SPLIT_VALUES:
            raise ManifestError(f"split must be one of {_SPLIT_VALUES}, got {self.split!r}")


@dataclass(frozen=True)
class Manifest:
    """Ordered collection of sample records.

    ``root`` is the directory against which relative record paths resolve;
    it is the manifest file's own directory when loaded from disk.
    """

    records: tuple[SampleRecord, ...]
    source_id: str
    root: Optional[Path] = None

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        if p.is_absolute() or self.root is None:
            return p
        return self.root / p


def load_manifest(path: str | Path) -> Manifest:
    """Parse a manifest CSV, validating schema, labels, and path uniqueness.

    Format: header line ``image_path,mask_path,label,split``; one record per
    line; ``mask_path`` and ``split`` may be empty; ``#`` starts a comment.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest file not found: {path}")

    records: list[SampleRecord] = []
    seen_paths: set[str] = set()
    header_seen = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            if not header_seen:
                if line != MANIFEST_HEADER:
                    raise ManifestError(
                        f"{path}:{lineno}: expected header {MANIFEST_HEADER!r}, got {line!r}"
                    )
                header_seen = True
                continue
            fields = line.split(",")
            if len(fields) != 4:
                raise ManifestError(f"{path}:{lineno}: expected 4 comma-separated fields, got {len(fields)}")
            image_path, mask_path, label_code, split = (f.strip() for f in fields)
            try:
                record = SampleRecord(
                    image_path=image_path,
                    label=ClassLabel.from_code(label_code),
                    mask_path=mask_path or None,
                    split=split or None,
                )
            except ManifestError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from None
            if image_path in seen_paths:
                raise ManifestError(f"{path}:{lineno}: duplicate image_path {image_path!r}")
            seen_paths.add(image_path)
            records.append(record)
    if not header_seen:
        raise ManifestError(f"{path}: missing header line {MANIFEST_HEADER!r}")
    return Manifest(records=tuple(records), source_id=str(path), root=path.parent)


def save_manifest(manifest: Manifest, out_path: str | Path) -> Path:
    """Write a manifest CSV; record paths are re-written relative to ``out_path``'s directory."""
    out_path = Path(out_path)
    out_dir = out_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)

    def _render(path: Optional[str]) -> str:
        if path is None:
            return ""
        if manifest.root is None:
            return Path(path).as_posix()
        absolute = os.path.abspath(manifest.resolve(path))
        return Path(os.path.relpath(absolute, os.path.abspath(out_dir))).as_posix()

    lines = [MANIFEST_HEADER]
    for r in manifest.records:
        lines.append(
            ",".join((_render(r.image_path), _render(r.mask_path), r.label.name, r.split or ""))
        )
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out_path


def class_distribution(manifest: Manifest) -> dict[ClassLabel, int]:
    """Record count per class; every label is present as a key."""
    counts = {label: 0 for label in CLASS_ORDER}
    for record in manifest.records:
        counts[record.label] += 1
    return counts


def _round_half_up(fraction: Fraction, n: int) -> int:
    # int() truncates toward zero; fraction and n are non-negative here.
    return int(fraction * n + Fraction(1, 2))


def stratified_split(
    manifest: Manifest, test_fraction: float, seed: int
) -> tuple[Manifest, Manifest]:
    """Seeded per-class split; the test side gets round-half-up(test_fraction * n_c) records.

    The fraction is interpreted decimally (via its shortest string form), so
    0.3 of 765 rounds to 230 rather than falling victim to binary float error.
    Both output manifests preserve the input record order.
    """
    if not 0.0 <= test_fraction <= 1.0:
        raise ValueError(f"test_fraction must be in [0, 1], got {test_fraction}")
    frac = Fraction(str(float(test_fraction)))
    seed_u = int(seed) % 2**63

    test_indices: set[int] = set()
    for class_index, label in enumerate(CLASS_ORDER):
        indices = np.array(
            [i for i, r in enumerate(manifest.records) if r.label is label], dtype=np.int64
        )
        if indices.size == 0:
            continue
        n_test = _round_half_up(frac, indices.size)
        rng = np.random.default_rng(np.random.SeedSequence((seed_u, class_index)))
        shuffled = rng.permutation(indices)
        test_indices.update(int(i) for i in shuffled[:n_test])

    train_records = tuple(r for i, r in enumerate(manifest.records) if i not in test_indices)
    test_records = tuple(r for i, r in enumerate(manifest.records) if i in test_indices)
    train = Manifest(train_records, source_id=f"{manifest.source_id}#train", root=manifest.root)
    test = Manifest(test_records, source_id=f"{manifest.source_id}#test", root=manifest.root)
    return train, test
