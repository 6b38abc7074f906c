"""Three-stage hierarchical encoder built from SpW Attention blocks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import ops
from .attention import BlockOptions, init_spw_block, spw_block
from .errors import ConfigurationError, ContractError, InputTooSmallError, UnsupportedPaddingError
from .params import ParameterStore, add_linear
from .tensor import Tensor, as_tensor

PATCH = 2


@dataclass(frozen=True)
class EncoderConfig:
    embed_dim: int = 96
    blocks_per_stage: tuple = (2, 2, 2)
    strip_widths: tuple = (4, 4, 4)
    heads_per_stage: tuple = (3, 6, 12)
    block: BlockOptions = field(default_factory=BlockOptions)

    def __post_init__(self):
        for name in ("blocks_per_stage", "strip_widths", "heads_per_stage"):
            value = tuple(int(v) for v in getattr(self, name))
            if len(value) != 3:
                raise ConfigurationError(f"{name} needs exactly 3 entries, got {value}")
            object.__setattr__(self, name, value)
        if self.embed_dim < 1:
            raise ConfigurationError("embed_dim must be positive")
        if min(self.strip_widths) < 1:
            raise ConfigurationError("strip widths must be >= 1")
        for k in range(3):
            if self.stage_dim(k) % self.heads_per_stage[k]:
                raise ConfigurationError(
                    f"stage {k + 1} dim {self.stage_dim(k)} not divisible by {self.heads_per_stage[k]} heads")

    def stage_dim(self, k: int) -> int:
        """Channel count of stage ``k`` (0-based): C, 2C, 4C."""
        return self.embed_dim * 2 ** k

    @property
    def out_dim(self) -> int:
        return self.stage_dim(2)


class PadRecord(NamedTuple):
    height: int
    width: int
    pad_bottom: int
    pad_right: int


class StageFeatures(NamedTuple):
    stage1: Tensor
    stage2: Tensor
    stage3: Tensor


def patch_embed(img, weight, bias) -> Tensor:
    """Split ``[3, H, W]`` into 2x2 patches, flatten to 12 values, project to C.

    Flattened order within a patch is (row offset, column offset, channel).
    """
    img = as_tensor(img)
    if img.ndim != 3:
        raise ContractError(f"patch_embed expects [channels, H, W], got {img.shape}")
    c, h, w = img.shape
    if h % PATCH or w % PATCH:
        raise ContractError(f"image extents {h}x{w} must be even")
    t = ops.reshape(img, (c, h // PATCH, PATCH, w // PATCH, PATCH))
    t = ops.transpose(t, (1, 3, 2, 4, 0))
    t = ops.reshape(t, (h // PATCH, w // PATCH, PATCH * PATCH * c))
    return ops.linear(t, weight, bias)


def pad_grid(x, n: int):
    """Reflect-pad a ``[H_p, W_p, C]`` grid at bottom/right to multiples of ``2n``."""
    x = as_tensor(x)
    h, w = x.shape[:2]
    unit = 2 * n
    pb = -h % unit
    pr = -w % unit
    rec = PadRecord(h, w, pb, pr)
    try:
        out = ops.reflect_pad(x, {0: (0, pb), 1: (0, pr)})
    except UnsupportedPaddingError as exc:
        raise InputTooSmallError(
            f"grid {h}x{w} too small to reflect-pad to a multiple of {unit}: {exc}") from None
    return out, rec


def unpad_grid(x, rec: PadRecord) -> Tensor:
    x = as_tensor(x)
    if x.shape[0] != rec.height + rec.pad_bottom or x.shape[1] != rec.width + rec.pad_right:
        raise ContractError(f"grid {x.shape[:2]} does not match pad record {rec}")
    if rec.pad_bottom == 0 and rec.pad_right == 0:
        return x
    return x[: rec.height, : rec.width]


def patch_merge(x, weight, bias=None) -> Tensor:
    """2x downsampling: concatenate 2x2 stride-2 neighbours (4C) and project to 2C.

    Channel blocks are ordered x[0::2, 0::2], x[1::2, 0::2], x[0::2, 1::2], x[1::2, 1::2].
    """
    x = as_tensor(x)
    h, w, c = x.shape
    if h % 2 or w % 2:
        raise ContractError(f"patch_merge needs even grid extents, got {h}x{w}")
    t = ops.reshape(x, (h // 2, 2, w // 2, 2, c))
    t = ops.transpose(t, (0, 2, 3, 1, 4))  # [h/2, w/2, col offset, row offset, c]
    t = ops.reshape(t, (h // 2, w // 2, 4 * c))
    return ops.linear(t, weight, bias)


def init_encoder(store: ParameterStore, rng: np.random.Generator, cfg: EncoderConfig) -> None:
    add_linear(store, rng, "encoder.patch_embed", PATCH * PATCH * 3, cfg.embed_dim)
    for k in range(3):
        dim = cfg.stage_dim(k)
        if k > 0:
            store.add(f"encoder.merge{k + 1}.weight",
                      rng.uniform(-1, 1, (4 * cfg.stage_dim(k - 1), dim)) / np.sqrt(4 * cfg.stage_dim(k - 1)))
        for i in range(cfg.blocks_per_stage[k]):
            init_spw_block(store, rng, f"encoder.stage{k + 1}.block{i}", dim,
                           cfg.strip_widths[k], cfg.heads_per_stage[k], cfg.block)


def _merge_any(x: Tensor, weight) -> Tensor:
    h, w = x.shape[:2]
    if h % 2 or w % 2:
        try:
            x = ops.reflect_pad(x, {0: (0, h % 2), 1: (0, w % 2)})
        except UnsupportedPaddingError as exc:
            raise InputTooSmallError(f"grid {h}x{w} too small to merge: {exc}") from None
    return patch_merge(x, weight)


def _run_stage(x: Tensor, store: ParameterStore, cfg: EncoderConfig, k: int) -> Tensor:
    n = cfg.strip_widths[k]
    padded, rec = pad_grid(x, n)
    for i in range(cfg.blocks_per_stage[k]):
        padded = spw_block(padded, store, f"encoder.stage{k + 1}.block{i}", n,
                           cfg.heads_per_stage[k], cfg.block)
    return unpad_grid(padded, rec)


def stage_extents(height: int, width: int) -> list:
    """Grid extents of the three stages for an image of ``height x width``."""
    out = []
    h, w = height, width
    for _ in range(3):
        h, w = math.ceil(h / 2), math.ceil(w / 2)
        out.append((h, w))
    return out


def encoder_forward(img, cfg: EncoderConfig, store: ParameterStore) -> StageFeatures:
    """Encode ``[3, H, W]`` (H, W even) into grids at H/2, H/4 and H/8."""
    x = patch_embed(img, store["encoder.patch_embed.weight"], store["encoder.patch_embed.bias"])
    stages = []
    for k in range(3):
        if k > 0:
            x = _merge_any(x, store[f"encoder.merge{k + 1}.weight"])
        x = _run_stage(x, store, cfg, k)
        stages.append(x)
    return StageFeatures(*stages)
