"""geofuse: GIS-mask-guided CNN+ViT fusion classifier for overhead imagery.

A CNN branch over binary spatial masks (the knowledge channel) is fused with
a ViT branch over the image; the package covers corpus handling, mask
derivation, the fused model, training/evaluation with per-class metrics, and
a CLI tying the pipeline together.
"""

from .manifest import (
    CLASS_ORDER,
    ClassLabel,
    Manifest,
    ManifestError,
    SampleRecord,
    class_distribution,
    load_manifest,
    save_manifest,
    stratified_split,
)
from .masks import LandCoverGrid, MaskError, SpatialMask, load_mask, mask_coverage, rasterize_landcover, synth_mask
from .metrics import EvalReport, compare, parse_report, per_class_metrics, render_report
from .model import Checkpoint, GeoFuseModel, ModelConfig, build_model, load_checkpoint, param_count, save_checkpoint
from .preprocess import ChannelStats, augment, compute_channel_stats, resize_image, resize_mask, standardize
from .training import TrainConfig, TrainingDiverged, evaluate, train
from .vit import VitConfig

__version__ = "0.1.0"
