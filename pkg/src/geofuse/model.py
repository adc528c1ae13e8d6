"""Fused classifier: CNN branch over masks/images, ViT branch, concat fusion, FC head.

Modes:
  baseline - the CNN consumes the 3-channel image (no knowledge input);
  kgml     - the CNN consumes the 1-channel binary spatial mask.
Both modes run the ViT over the image; features are fused as Z = [h_vit; h_cnn].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .preprocess import ChannelStats
from .vit import VitBranch, VitConfig

MODES = ("baseline", "kgml")
N_CLASSES = 5
CHECKPOINT_MAGIC = b"GEOFUSE-CKPT-1\n"

CONV1_FILTERS = 64
CONV2_FILTERS = 128
CNN_OUTPUT_GRID = 14
MIN_CNN_INPUT = 28  # 2x the pooled grid the adaptive stage condenses to


@dataclass(frozen=True)
class CnnConfig:
    """Mask/image feature stack; filter counts and output grid are fixed."""

    in_channels: int = 3
    conv1_filters: int = CONV1_FILTERS
    conv2_filters: int = CONV2_FILTERS
    kernel_size: int = 3
    pool_size: int = 2
    output_grid: int = CNN_OUTPUT_GRID

    def __post_init__(self) -> None:
        if self.in_channels < 1:
            raise ValueError("in_channels must be >= 1")
        if (self.conv1_filters, self.conv2_filters, self.output_grid) != (
            CONV1_FILTERS,
            CONV2_FILTERS,
            CNN_OUTPUT_GRID,
        ):
            raise ValueError(
                f"filter counts and output grid are fixed at "
                f"({CONV1_FILTERS}, {CONV2_FILTERS}, {CNN_OUTPUT_GRID})"
            )


@dataclass(frozen=True)
class FusionConfig:
    reduced_dim: int = 128
    n_classes: int = N_CLASSES

    def __post_init__(self) -> None:
        if self.reduced_dim <= 0:
            raise ValueError("reduced_dim must be positive")


@dataclass(frozen=True)
class ModelConfig:
    mode: str = "baseline"
    vit: VitConfig = field(default_factory=VitConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    cnn_image_and_mask: bool = False  # kgml variant: CNN sees image+mask (4 channels)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def cnn_in_channels(self) -> int:
        if self.mode == "baseline":
            return 3
        return 4 if self.cnn_image_and_mask else 1

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "cnn_image_and_mask": self.cnn_image_and_mask,
            "vit": asdict(self.vit),
            "fusion": asdict(self.fusion),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(
            mode=data["mode"],
            cnn_image_and_mask=bool(data.get("cnn_image_and_mask", False)),
            vit=VitConfig(**data["vit"]),
            fusion=FusionConfig(**data["fusion"]),
        )


class FeatureBundle(NamedTuple):
    h_vit: torch.Tensor  # (B, D_v)
    h_cnn: torch.Tensor  # (B, D_c)
    cnn_map: torch.Tensor  # (B, 128, 14, 14)
    fused: torch.Tensor  # (B, D_v + D_c)
    logits: torch.Tensor  # (B, 5)


class CnnBranch(nn.Module):
    """Conv(64, 3x3, same) -> ReLU -> MaxPool(2x2) -> Conv(128, 3x3, same) -> ReLU -> AdaptiveAvgPool(14x14)."""

    def __init__(self, config: CnnConfig):
        super().__init__()
        self.config = config
        pad = config.kernel_size // 2
        self.conv1 = nn.Conv2d(config.in_channels, config.conv1_filters, config.kernel_size, padding=pad)
        self.conv2 = nn.Conv2d(config.conv1_filters, config.conv2_filters, config.kernel_size, padding=pad)

    def init_parameters(self, generator: torch.Generator) -> None:
        """Uniform fan-in scaling for conv weights, zero biases."""
        for conv in (self.conv1, self.conv2):
            fan_in = conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1]
            bound = 1.0 / (fan_in**0.5)
            with torch.no_grad():
                conv.weight.uniform_(-bound, bound, generator=generator)
                conv.bias.zero_()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2], x.shape[-1]
        if h < MIN_CNN_INPUT or w < MIN_CNN_INPUT:
            raise ValueError(f"CNN input must be at least {MIN_CNN_INPUT}x{MIN_CNN_INPUT}, got {h}x{w}")
        x = F.max_pool2d(F.relu(self.conv1(x)), self.config.pool_size)
        x = F.relu(self.conv2(x))
        return F.adaptive_avg_pool2d(x, self.config.output_grid)


def pool_cnn(feature_map: torch.Tensor) -> torch.Tensor:
    """Global average over the spatial grid: (B, C, H, W) -> (B, C)."""
    return feature_map.mean(dim=(-2, -1))


def fuse(h_vit: torch.Tensor, h_cnn: torch.Tensor) -> torch.Tensor:
    """Concatenate pooled features, ViT first: Z = [h_vit; h_cnn]."""
    if h_vit.shape[:-1] != h_cnn.shape[:-1]:
        raise ValueError(f"batch shapes differ: {h_vit.shape} vs {h_cnn.shape}")
    return torch.cat([h_vit, h_cnn], dim=-1)


class FusionHead(nn.Module):
    """FC dimension reduction plus linear classifier; emits raw logits."""

    def __init__(self, in_dim: int, config: FusionConfig):
        super().__init__()
        self.fc1 = nn.Linear(in_dim, config.reduced_dim)
        self.fc2 = nn.Linear(config.reduced_dim, config.n_classes)

    def init_parameters(self, generator: torch.Generator) -> None:
        for lin in (self.fc1, self.fc2):
            nn.init.trunc_normal_(lin.weight, std=0.02, generator=generator)
            nn.init.zeros_(lin.bias)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return self.fc2(F.relu(self.fc1(z)))


def _branch_seed(seed: int, branch: int) -> int:
    return int(np.random.SeedSequence((int(seed) % 2**63, branch)).generate_state(1, np.uint64)[0])


class GeoFuseModel(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.cnn = CnnBranch(CnnConfig(in_channels=config.cnn_in_channels))
        self.vit = VitBranch(config.vit, in_channels=3)
        self.head = FusionHead(config.vit.embed_dim + CONV2_FILTERS, config.fusion)

    def init_parameters(self, seed: int) -> None:
        """Deterministic init; each branch draws from its own derived stream so
        the ViT initialization is identical across baseline/kgml for one seed."""
        for branch_id, module in enumerate((self.vit, self.cnn, self.head)):
            gen = torch.Generator().manual_seed(_branch_seed(seed, branch_id))
            module.init_parameters(gen)

    def forward(
        self,
        images: torch.Tensor,
        masks: Optional[torch.Tensor] = None,
        return_features: bool = False,
    ):
        """images: (B, 3, H, W); masks: (B, 1, H, W) binary, required in kgml mode."""
        if self.config.mode == "kgml":
            if masks is None:
                raise ValueError("kgml mode requires a mask input")
            cnn_input = torch.cat([images, masks], dim=1) if self.config.cnn_image_and_mask else masks
        else:
            cnn_input = images
        cnn_map = self.cnn(cnn_input)
        h_cnn = pool_cnn(cnn_map)
        _, h_vit = self.vit(images)
        z = fuse(h_vit, h_cnn)
        logits = self.head(z)
        if return_features:
            return FeatureBundle(h_vit=h_vit, h_cnn=h_cnn, cnn_map=cnn_map, fused=z, logits=logits)
        return logits


def build_model(config: ModelConfig, seed: int) -> GeoFuseModel:
    model = GeoFuseModel(config)
    model.init_parameters(seed)
    return model


def param_count(config: ModelConfig) -> int:
    """Exact learnable-parameter total for a configuration."""
    model = GeoFuseModel(config)
    return sum(p.numel() for p in model.parameters())


# --- checkpoint container -----------------------------------------------------
#
# Layout: magic line, ASCII decimal header length, JSON header (config echo,
# seed, step count, array index), then the raw little-endian array bytes in
# index order.


@dataclass(frozen=True)
class Checkpoint:
    model_config: ModelConfig
    seed: int
    steps: int
    arrays: dict[str, np.ndarray]
    train_echo: dict

    @property
    def stats(self) -> ChannelStats:
        return ChannelStats(
            mean=self.arrays["norm.mean"].astype(np.float64),
            std=self.arrays["norm.std"].astype(np.float64),
        )

    def restore_model(self) -> GeoFuseModel:
        model = GeoFuseModel(self.model_config)
        state = {
            name: torch.from_numpy(arr.copy())
            for name, arr in self.arrays.items()
            if not name.startswith("norm.")
        }
        model.load_state_dict(state)
        model.eval()
        return model


def checkpoint_from_model(
    model: GeoFuseModel,
    stats: ChannelStats,
    seed: int,
    steps: int,
    train_echo: Optional[dict] = None,
) -> Checkpoint:
    arrays = {name: p.detach().cpu().numpy().copy() for name, p in model.state_dict().items()}
    arrays["norm.mean"] = stats.mean.astype(np.float64)
    arrays["norm.std"] = stats.std.astype(np.float64)
    return Checkpoint(
        model_config=model.config,
        seed=int(seed),
        steps=int(steps),
        arrays=arrays,
        train_echo=dict(train_echo or {}),
    )


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    index = []
    blobs = []
    offset = 0
    for name in sorted(ckpt.arrays):
        arr = np.ascontiguousarray(ckpt.arrays[name])
        blob = arr.tobytes()
        index.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": arr.dtype.name,
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(
        {
            "model_config": ckpt.model_config.to_dict(),
            "seed": ckpt.seed,
            "steps": ckpt.steps,
            "train_echo": ckpt.train_echo,
            "arrays": index,
        },
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(f"{len(header)}\n".encode("ascii"))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.readline()
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not a GEOFUSE-CKPT-1 checkpoint")
        header_len = int(fh.readline().strip())
        header = json.loads(fh.read(header_len).decode("utf-8"))
        payload = fh.read()
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        start, n = entry["offset"], entry["nbytes"]
        arr = np.frombuffer(payload[start : start + n], dtype=np.dtype(entry["dtype"]))
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return Checkpoint(
        model_config=ModelConfig.from_dict(header["model_config"]),
        seed=int(header["seed"]),
        steps=int(header["steps"]),
        arrays=arrays,
        train_echo=dict(header.get("train_echo", {})),
    )
