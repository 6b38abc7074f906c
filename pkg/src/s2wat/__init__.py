"""Strips-window attention transformer for arbitrary image style transfer."""

from .attention import (AttentionParams, BlockOptions, RelPosBias, WindowGeometry, attn_merge, global_msa,
                        spw_block, window_attention, window_partition, window_reverse)
from .config import RunConfig, load_config, preset
from .encoder import EncoderConfig, StageFeatures, encoder_forward
from .estimator import S2WATStylizer
from .losses import FeatureExtractor, LossWeights, content_loss, identity_losses, style_loss, total_loss
from .model import ModelConfig, S2WAT, desk_config
from .params import ParameterStore
from .tensor import FlopCounter, Tape, Tensor, backward, count_flops, no_grad
from .transfer import DecoderConfig, TransferConfig

__version__ = "0.1.0"

__all__ = [
    "AttentionParams", "BlockOptions", "DecoderConfig", "EncoderConfig", "FeatureExtractor", "FlopCounter",
    "LossWeights", "ModelConfig", "ParameterStore", "RelPosBias", "RunConfig", "S2WAT", "S2WATStylizer",
    "StageFeatures", "Tape", "Tensor", "TransferConfig", "WindowGeometry", "attn_merge", "backward",
    "content_loss", "count_flops", "desk_config", "encoder_forward", "global_msa", "identity_losses",
    "load_config", "no_grad", "preset", "spw_block", "style_loss", "total_loss", "window_attention",
    "window_partition", "window_reverse",
]
