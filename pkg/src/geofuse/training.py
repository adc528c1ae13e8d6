"""Seeded training and deterministic evaluation over manifest-described corpora."""

from __future__ import annotations

from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .manifest import CLASS_ORDER, Manifest, class_distribution
from .masks import load_landcover, load_mask, rasterize_landcover, synth_mask
from .metrics import EvalReport, confusion_matrix, per_class_metrics
from .model import Checkpoint, ModelConfig, build_model, checkpoint_from_model
from .preprocess import (
    ChannelStats,
    augment,
    load_image,
    per_sample_rng,
    resize_image,
    sample_augmentation,
    standardize,
)

OPTIMIZER_NAME = "adamw"
_EPOCH_STREAM = 1
_AUG_STREAM = 2
_MASK_STREAM = 3
_EVAL_BATCH = 32
_CACHE_LIMIT_BYTES = 512 * 2**20


class TrainingDiverged(RuntimeError):
    """Raised when the loss goes non-finite; message carries the step number."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 3e-4
    weight_decay: float = 1e-4
    seed: int = 0
    mode: str = "baseline"
    class_weights: bool = False  # inverse-frequency weighting, off by default
    synth_masks: bool = False  # derive missing masks from the label (pipeline testing only)

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass(frozen=True)
class TrainResult:
    checkpoint: Checkpoint
    history: tuple[float, ...]  # per-epoch mean loss


class _SampleStore:
    """Resized raw images (+ masks) for one manifest, cached in RAM when small."""

    def __init__(
        self,
        manifest: Manifest,
        image_size: int,
        need_masks: bool,
        landcover_codes: frozenset[int],
        synth_masks: bool,
        data_seed: int,
    ):
        self.manifest = manifest
        self.image_size = image_size
        self.need_masks = need_masks
        self.landcover_codes = landcover_codes
        self.synth_masks = synth_masks
        self.data_seed = data_seed
        self.labels = np.array([int(r.label) for r in manifest.records], dtype=np.int64)
        n_bytes = len(manifest) * image_size * image_size * (3 + need_masks) * 4
        self._cache: Optional[list[tuple[np.ndarray, Optional[np.ndarray]]]] = (
            [None] * len(manifest) if n_bytes <= _CACHE_LIMIT_BYTES else None
        )

    def __len__(self) -> int:
        return len(self.manifest)

    def _load(self, index: int) -> tuple[np.ndarray, Optional[np.ndarray]]:
        record = self.manifest.records[index]
        img = resize_image(load_image(self.manifest.resolve(record.image_path)), self.image_size)
        mask = None
        if self.need_masks:
            dims = (self.image_size, self.image_size)
            if record.mask_path is not None:
                if self.landcover_codes:
                    lc = load_landcover(self.manifest.resolve(record.mask_path))
                    mask = rasterize_landcover(lc, self.landcover_codes, dims).grid
                else:
                    mask = load_mask(self.manifest.resolve(record.mask_path), dims).grid
            else:
                rng = per_sample_rng(self.data_seed, _MASK_STREAM, index)
                mask = synth_mask(record.label, rng, dims).grid
        return img, mask

    def get(self, index: int) -> tuple[np.ndarray, Optional[np.ndarray]]:
        if self._cache is None:
            return self._load(index)
        if self._cache[index] is None:
            self._cache[index] = self._load(index)
        return self._cache[index]


def corpus_channel_stats(store: _SampleStore) -> ChannelStats:
    """Population per-channel stats over the store's resized raw images."""
    total = np.zeros(3, dtype=np.float64)
    total_sq = np.zeros(3, dtype=np.float64)
    n_pixels = 0
    for i in range(len(store)):
        img, _ = store.get(i)
        flat = img.reshape(-1, 3).astype(np.float64)
        total += flat.sum(axis=0)
        total_sq += np.square(flat).sum(axis=0)
        n_pixels += flat.shape[0]
    mean = total / n_pixels
    var = np.maximum(total_sq / n_pixels - mean**2, 0.0)
    return ChannelStats(mean=mean, std=np.sqrt(var))


def _validate_kgml_masks(manifest: Manifest, synth_masks: bool) -> None:
    if synth_masks:
        return
    missing = [r.image_path for r in manifest.records if r.mask_path is None]
    if missing:
        raise ValueError(
            f"kgml mode requires a mask for every record; {len(missing)} records lack one "
            f"(first: {missing[0]!r})"
        )


def _to_batch(
    samples: Sequence[tuple[np.ndarray, Optional[np.ndarray]]]
) -> tuple[torch.Tensor, Optional[torch.Tensor]]:
    imgs = np.stack([s[0] for s in samples]).transpose(0, 3, 1, 2)
    images = torch.from_numpy(np.ascontiguousarray(imgs, dtype=np.float32))
    masks = None
    if samples[0][1] is not None:
        m = np.stack([s[1] for s in samples])[:, None, :, :]
        masks = torch.from_numpy(np.ascontiguousarray(m, dtype=np.float32))
    return images, masks


def _class_weight_tensor(manifest: Manifest) -> torch.Tensor:
    counts = class_distribution(manifest)
    total = len(manifest)
    weights = [
        total / (len(CLASS_ORDER) * counts[label]) if counts[label] > 0 else 0.0
        for label in CLASS_ORDER
    ]
    return torch.tensor(weights, dtype=torch.float32)


def train(
    tc: TrainConfig,
    mc: ModelConfig,
    train_manifest: Manifest,
    landcover_codes: frozenset[int] = frozenset(),
    on_epoch: Optional[Callable[[int, float], None]] = None,
) -> TrainResult:
    """Seeded mini-batch cross-entropy training; returns checkpoint and loss history."""
    if tc.mode != mc.mode:
        raise ValueError(f"train mode {tc.mode!r} does not match model mode {mc.mode!r}")
    if len(train_manifest) == 0:
        raise ValueError("training manifest is empty")
    if tc.mode == "kgml":
        _validate_kgml_masks(train_manifest, tc.synth_masks)

    image_size = mc.vit.image_size
    store = _SampleStore(
        train_manifest,
        image_size,
        need_masks=(tc.mode == "kgml"),
        landcover_codes=landcover_codes,
        synth_masks=tc.synth_masks,
        data_seed=tc.seed,
    )
    stats = corpus_channel_stats(store)

    model = build_model(mc, tc.seed)
    model.train()
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=tc.learning_rate, weight_decay=tc.weight_decay
    )
    weight = _class_weight_tensor(train_manifest) if tc.class_weights else None

    history: list[float] = []
    step = 0
    n = len(store)
    for epoch in range(tc.epochs):
        order = per_sample_rng(tc.seed, _EPOCH_STREAM, epoch).permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, tc.batch_size):
            batch_idx = order[start : start + tc.batch_size]
            samples = []
            for i in batch_idx:
                img, mask = store.get(int(i))
                img = standardize(img, stats)
                params = sample_augmentation(per_sample_rng(tc.seed, _AUG_STREAM, epoch, int(i)))
                img, mask = augment(img, mask, params)
                samples.append((img, mask))
            images, masks = _to_batch(samples)
            labels = torch.from_numpy(store.labels[batch_idx])

            step += 1
            logits = model(images, masks)
            loss = F.cross_entropy(logits, labels, weight=weight)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at step {step}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.item()) * len(batch_idx)
        history.append(epoch_loss / n)
        if on_epoch is not None:
            on_epoch(epoch + 1, history[-1])

    echo = asdict(tc) | {"optimizer": OPTIMIZER_NAME, "loss": "cross_entropy"}
    checkpoint = checkpoint_from_model(model, stats, seed=tc.seed, steps=step, train_echo=echo)
    return TrainResult(checkpoint=checkpoint, history=tuple(history))


def evaluate(
    checkpoint: Checkpoint,
    test_manifest: Manifest,
    mode: Optional[str] = None,
    landcover_codes: frozenset[int] = frozenset(),
    synth_masks: Optional[bool] = None,
) -> EvalReport:
    """Deterministic single pass: resize + standardize only, argmax predictions.

    Ties break toward the lowest class index. ``mode``, when given, must match
    the checkpoint's configuration.
    """
    ckpt_mode = checkpoint.model_config.mode
    if mode is not None and mode != ckpt_mode:
        raise ValueError(f"checkpoint was trained in {ckpt_mode!r} mode, not {mode!r}")
    if synth_masks is None:
        synth_masks = bool(checkpoint.train_echo.get("synth_masks", False))
    if ckpt_mode == "kgml":
        _validate_kgml_masks(test_manifest, synth_masks)

    model = checkpoint.restore_model()
    stats = checkpoint.stats
    store = _SampleStore(
        test_manifest,
        checkpoint.model_config.vit.image_size,
        need_masks=(ckpt_mode == "kgml"),
        landcover_codes=landcover_codes,
        synth_masks=synth_masks,
        data_seed=checkpoint.seed,
    )

    predictions = np.empty(len(store), dtype=np.int64)
    with torch.no_grad():
        for start in range(0, len(store), _EVAL_BATCH):
            idx = range(start, min(start + _EVAL_BATCH, len(store)))
            samples = []
            for i in idx:
                img, mask = store.get(i)
                samples.append((standardize(img, stats), mask))
            images, masks = _to_batch(samples)
            logits = model(images, masks).numpy()
            # np.argmax returns the first maximum: ties go to the lowest index.
            predictions[list(idx)] = np.argmax(logits, axis=1)

    cm = confusion_matrix(store.labels, predictions)
    return per_class_metrics(cm, mode=ckpt_mode, seed=checkpoint.seed)


def save_history(history: Sequence[float], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["epoch,mean_loss"]
    for epoch, loss in enumerate(history, start=1):
        lines.append(f"{epoch},{loss:.6f}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
