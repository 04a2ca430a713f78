"""Minimal reverse-mode autodiff, the implicit embedding field, the pixel encoder, Adam."""

from .autodiff import Tensor
from .models import LatentField, PixelEncoder, field_forward, encoder_forward
from .optim import Adam
from .checkpoint import (
    CheckpointCorruptError,
    CheckpointShapeError,
    CheckpointVersionError,
    load_checkpoint,
    save_checkpoint,
)
