"""Network definitions and parameter persistence: U-Net encoder/decoder,
projection head, pair classifier, SSL heads, and the checkpoint container."""

from .checkpoint import (
    CheckpointMeta,
    arch_digest,
    load_checkpoint,
    load_into,
    params_digest,
    save_checkpoint,
)
from .heads import (
    EMBED_DIM,
    FEATURE_DIM,
    PairClassifier,
    ProjectionHead,
    SSLPredictor,
    SSLProjector,
)
from .unet import UNet, UNetConfig, UNetDecoder, UNetEncoder, initialize_parameters

__all__ = [
    "CheckpointMeta",
    "EMBED_DIM",
    "FEATURE_DIM",
    "PairClassifier",
    "ProjectionHead",
    "SSLPredictor",
    "SSLProjector",
    "UNet",
    "UNetConfig",
    "UNetDecoder",
    "UNetEncoder",
    "arch_digest",
    "initialize_parameters",
    "load_checkpoint",
    "load_into",
    "params_digest",
    "save_checkpoint",
]
