"""
Patch encoder, optimizer and checkpoints.
"""

from .checkpoint import Checkpoint, config_hash, load_checkpoint, save_checkpoint
from .encoder import (
    DEFAULT_LAYER_SIZES,
    EncoderState,
    FrozenRandomEncoder,
    MLPEncoder,
    NoiseEncoder,
    PatchEncoder,
    backward,
    backward_input,
    forward,
    init_encoder,
    softplus,
)
from .optimizer import OptimizerState, adam_step

__all__ = [
    "DEFAULT_LAYER_SIZES",
    "Checkpoint",
    "EncoderState",
    "FrozenRandomEncoder",
    "MLPEncoder",
    "NoiseEncoder",
    "OptimizerState",
    "PatchEncoder",
    "adam_step",
    "backward",
    "backward_input",
    "config_hash",
    "forward",
    "init_encoder",
    "load_checkpoint",
    "save_checkpoint",
    "softplus",
]
