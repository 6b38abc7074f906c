"""The full encoder-transfer-decoder stylization network."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import ops
from .encoder import EncoderConfig, StageFeatures, encoder_forward, init_encoder
from .errors import ConfigurationError, InputTooSmallError
from .params import ParameterStore
from .tensor import Tensor, as_tensor, no_grad
from .transfer import (DecoderConfig, TransferConfig, cnn_decode, flatten_grid, init_decoder,
                       init_transfer, patch_reverse, transfer_forward, transfer_layer)


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    transfer: TransferConfig = field(default_factory=TransferConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)

    def __post_init__(self):
        self.transfer.check(self.encoder.out_dim)


def desk_config() -> ModelConfig:
    """Small preset: C=16, strip width 2, two heads per stage, two transfer layers."""
    return ModelConfig(
        encoder=EncoderConfig(embed_dim=16, blocks_per_stage=(2, 2, 2), strip_widths=(2, 2, 2),
                              heads_per_stage=(2, 2, 2)),
        transfer=TransferConfig(depth=2, heads=2),
        decoder=DecoderConfig(convs_per_scale=2),
    )


class S2WAT:
    """Parameters plus forward passes of the stylization network."""

    def __init__(self, config: ModelConfig, params: ParameterStore) -> None:
        self.config = config
        self.params = params

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int = 0, dtype=np.float32) -> "S2WAT":
        rng = np.random.default_rng(seed)
        store = ParameterStore(dtype)
        init_encoder(store, rng, config.encoder)
        init_transfer(store, rng, config.encoder.out_dim, config.transfer)
        init_decoder(store, rng, config.encoder.out_dim, config.decoder)
        return cls(config, store)

    def astype(self, dtype) -> "S2WAT":
        return S2WAT(self.config, self.params.astype(dtype))

    # -- pieces ------------------------------------------------------------
    def _prepare(self, img) -> Tensor:
        img = as_tensor(img)
        if img.ndim != 3 or img.shape[0] != 3:
            raise ConfigurationError(f"images must be [3, H, W], got {img.shape}")
        h, w = img.shape[1:]
        if h % 2 or w % 2:
            try:
                img = ops.reflect_pad_2d(img, 0, h % 2, 0, w % 2)
            except Exception as exc:
                raise InputTooSmallError(f"image {h}x{w} too small: {exc}") from None
        return img if img.requires_grad else Tensor(img.data.astype(self.params.dtype, copy=False))

    def encode(self, img) -> StageFeatures:
        return encoder_forward(self._prepare(img), self.config.encoder, self.params)

    def decode(self, stage3: Tensor, out_size: tuple, f_s: Tensor) -> Tensor:
        f_c = flatten_grid(stage3)
        f_cs = transfer_forward(f_c, f_s, self.config.transfer, self.params)
        grid = stage3.shape[:2]
        return cnn_decode(patch_reverse(f_cs, grid), self.config.decoder, self.params, out_size)

    # -- full passes --------------------------------------------------------
    def forward(self, content, style) -> Tensor:
        """Differentiable stylization ``[3, H, W] x [3, H', W'] -> [3, H, W]``."""
        content = as_tensor(content)
        out_size = content.shape[1:]
        f_c = self.encode(content).stage3
        f_s = flatten_grid(self.encode(style).stage3)
        return self.decode(f_c, out_size, f_s)

    __call__ = forward

    def forward_triplet(self, content, style):
        """``(I_cs, I_cc, I_ss)`` sharing one encoding of each input."""
        content, style = as_tensor(content), as_tensor(style)
        e_c = self.encode(content).stage3
        e_s = self.encode(style).stage3
        s_c, s_s = flatten_grid(e_c), flatten_grid(e_s)
        i_cs = self.decode(e_c, content.shape[1:], s_s)
        i_cc = self.decode(e_c, content.shape[1:], s_c)
        i_ss = self.decode(e_s, style.shape[1:], s_s)
        return i_cs, i_cc, i_ss

    def stylize(self, content, style) -> np.ndarray:
        """Inference without graph construction; returns an unclamped ``[3, H, W]`` array."""
        with no_grad():
            return self.forward(content, style).data

    def first_layer_attention(self, content, style):
        """Stage-3 grids and the first transfer layer's cross-attention ``[heads, N_c, N_s]``."""
        with no_grad():
            e_c = self.encode(content).stage3
            e_s = self.encode(style).stage3
            if self.config.transfer.depth == 0:
                raise ConfigurationError("transfer depth 0 has no attention maps")
            _, attn = transfer_layer(flatten_grid(e_c), flatten_grid(e_s), self.params,
                                     "transfer.layer0", self.config.transfer.heads, return_attn=True)
        return e_c, e_s, attn.data
