"""Flat run configuration: ``key = value`` files with documented defaults.

Unknown keys are rejected; command-line flags override file values; every
command writes the resolved configuration into its output directory.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Optional

from .model import FusionConfig, ModelConfig
from .synth import DEFAULT_SNR, SynthConfig
from .training import TrainConfig
from .vit import VitConfig


class ConfigError(ValueError):
    """Malformed configuration file or unknown key."""


@dataclass(frozen=True)
class RunConfig:
    # global
    seed: int = 0
    mode: str = "baseline"
    # split
    test_fraction: float = 0.3
    # training
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 3e-4
    weight_decay: float = 1e-4
    class_weights: bool = False
    synth_masks: bool = False
    train_manifest: str = ""
    # model
    image_size: int = 224
    patch_size: int = 16
    embed_dim: int = 192
    depth: int = 6
    heads: int = 3
    mlp_ratio: float = 4.0
    pooling: str = "mean_tokens"
    reduced_dim: int = 128
    cnn_image_and_mask: bool = False
    # mask engine
    landcover_codes: str = ""
    # synthetic corpus
    synth_per_class: int = 100
    synth_image_size: int = 224
    synth_snr: float = DEFAULT_SNR

    def model_config(self, mode: Optional[str] = None) -> ModelConfig:
        return ModelConfig(
            mode=mode or self.mode,
            cnn_image_and_mask=self.cnn_image_and_mask,
            vit=VitConfig(
                image_size=self.image_size,
                patch_size=self.patch_size,
                embed_dim=self.embed_dim,
                depth=self.depth,
                heads=self.heads,
                mlp_ratio=self.mlp_ratio,
                pooling=self.pooling,
            ),
            fusion=FusionConfig(reduced_dim=self.reduced_dim),
        )

    def train_config(self, mode: Optional[str] = None) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            seed=self.seed,
            mode=mode or self.mode,
            class_weights=self.class_weights,
            synth_masks=self.synth_masks,
        )

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            per_class=self.synth_per_class,
            image_size=self.synth_image_size,
            snr=self.synth_snr,
            seed=self.seed,
        )

    def landcover_code_set(self) -> frozenset[int]:
        text = self.landcover_codes.strip()
        if not text:
            return frozenset()
        try:
            return frozenset(int(part) for part in text.split(","))
        except ValueError:
            raise ConfigError(f"landcover_codes must be comma-separated integers, got {text!r}") from None


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _cast(key: str, raw: str) -> Any:
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    if kind == "bool":
        lowered = raw.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"key {key!r} expects a boolean, got {raw!r}")
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"key {key!r} expects {kind}, got {raw!r}") from None
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {stripped!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _cast(key, raw)
    return values


def load_run_config(
    path: Optional[str | Path] = None, overrides: Optional[dict[str, Any]] = None
) -> RunConfig:
    """Defaults, then file values, then explicit overrides (e.g. CLI flags)."""
    values: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values.update(parse_config_text(path.read_text(encoding="utf-8"), source=str(path)))
    for key, value in (overrides or {}).items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        if value is not None:
            values[key] = value
    return RunConfig(**values)


def _render_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def echo_text(config: RunConfig, command_notes: Optional[dict[str, str]] = None) -> str:
    """Resolved configuration as reloadable ``key = value`` lines."""
    lines = []
    for key, note in (command_notes or {}).items():
        lines.append(f"# {key} = {note}")
    for f in fields(RunConfig):
        lines.append(f"{f.name} = {_render_value(getattr(config, f.name))}")
    return "\n".join(lines) + "\n"


def write_echo(
    config: RunConfig, out_dir: str | Path, command_notes: Optional[dict[str, str]] = None
) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "config_echo.txt"
    path.write_text(echo_text(config, command_notes), encoding="utf-8")
    return path
