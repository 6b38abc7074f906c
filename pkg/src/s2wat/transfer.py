"""Transformer-decoder transfer module, patch reverse and the convolutional decoder."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import ops
from .attention import AttentionParams, attend, init_attention, layer_norm, mlp, self_attention
from .errors import ConfigurationError, ContractError, DimensionError
from .params import ParameterStore, add_conv, add_layer_norm, add_linear
from .tensor import Tensor, as_tensor


@dataclass(frozen=True)
class TransferConfig:
    depth: int = 3
    heads: int = 8
    mlp_ratio: int = 4

    def check(self, dim: int) -> None:
        if self.depth < 0:
            raise ConfigurationError("transfer depth must be >= 0")
        if dim % self.heads:
            raise ConfigurationError(f"transfer dim {dim} not divisible by {self.heads} heads")


@dataclass(frozen=True)
class DecoderConfig:
    """Mirrored-VGG decoder: three x2 scales then a linear conv to RGB.

    Scale ``s`` maps its input to ``in_dim / 2**(s+1)`` channels with a
    conv+ReLU, upsamples, then runs ``convs_per_scale - 1`` more conv+ReLU.
    """

    convs_per_scale: int = 2

    def channels(self, in_dim: int) -> list:
        return [max(in_dim // 2 ** (s + 1), 1) for s in range(3)]

    def layers(self, in_dim: int) -> list:
        """``(cin, cout, relu, upsample_after)`` for every conv in order."""
        if self.convs_per_scale < 1:
            raise ConfigurationError("convs_per_scale must be >= 1")
        out = []
        cin = in_dim
        for cout in self.channels(in_dim):
            out.append((cin, cout, True, True))
            out.extend((cout, cout, True, False) for _ in range(self.convs_per_scale - 1))
            cin = cout
        out.append((cin, 3, False, False))
        return out


# -- transfer ------------------------------------------------------------------

def init_transfer(store: ParameterStore, rng: np.random.Generator, dim: int, cfg: TransferConfig) -> None:
    cfg.check(dim)
    for i in range(cfg.depth):
        prefix = f"transfer.layer{i}"
        add_layer_norm(store, f"{prefix}.ln1", dim)
        init_attention(store, rng, f"{prefix}.msa", dim)
        add_layer_norm(store, f"{prefix}.ln2", dim)
        for name in ("q", "k", "v", "proj"):
            add_linear(store, rng, f"{prefix}.mha.{name}", dim, dim)
        add_layer_norm(store, f"{prefix}.ln3", dim)
        add_linear(store, rng, f"{prefix}.mlp.fc1", dim, cfg.mlp_ratio * dim)
        add_linear(store, rng, f"{prefix}.mlp.fc2", cfg.mlp_ratio * dim, dim)


def cross_attention(query_tokens: Tensor, style: Tensor, store: ParameterStore, prefix: str, heads: int):
    """MHA with queries from ``query_tokens`` and keys/values from ``style`` (both ``[N, D]``)."""
    def proj(x, name):
        return ops.linear(x, store[f"{prefix}.{name}.weight"], store[f"{prefix}.{name}.bias"])

    q = ops.reshape(proj(query_tokens, "q"), (1,) + query_tokens.shape)
    k = ops.reshape(proj(style, "k"), (1,) + style.shape)
    v = ops.reshape(proj(style, "v"), (1,) + style.shape)
    out, attn = attend(q, k, v, heads)
    out = ops.reshape(out, query_tokens.shape)
    return proj(out, "proj"), attn[0]


def transfer_layer(c, s, store: ParameterStore, prefix: str, heads: int, return_attn: bool = False):
    """One pre-LN decoder layer: self-attention on content, cross-attention to style, MLP.

    Style tokens enter the key/value projections without normalization.
    """
    c, s = as_tensor(c), as_tensor(s)
    if c.ndim != 2 or s.ndim != 2 or c.shape[1] != s.shape[1]:
        raise DimensionError(f"content {c.shape} and style {s.shape} must be [N, D] with equal D")
    n, d = c.shape
    msa = AttentionParams.from_store(store, f"{prefix}.msa", heads)
    sa, _ = self_attention(ops.reshape(layer_norm(c, store, f"{prefix}.ln1"), (1, n, d)), msa)
    c_hat = ops.add(ops.reshape(sa, (n, d)), c)
    ca, attn = cross_attention(layer_norm(c_hat, store, f"{prefix}.ln2"), s, store, f"{prefix}.mha", heads)
    c_tilde = ops.add(ca, c_hat)
    out = ops.add(mlp(layer_norm(c_tilde, store, f"{prefix}.ln3"), store, f"{prefix}.mlp"), c_tilde)
    return (out, attn) if return_attn else out


def transfer_forward(f_c, f_s, cfg: TransferConfig, store: ParameterStore) -> Tensor:
    """Stack of ``cfg.depth`` transfer layers; depth 0 is the identity."""
    out = as_tensor(f_c)
    for i in range(cfg.depth):
        out = transfer_layer(out, f_s, store, f"transfer.layer{i}", cfg.heads)
    return out


# -- sequence/grid reshapes ----------------------------------------------------

def flatten_grid(x) -> Tensor:
    """``[H, W, D]`` grid to ``[H*W, D]`` tokens, row-major."""
    x = as_tensor(x)
    h, w, d = x.shape
    return ops.reshape(x, (h * w, d))


def patch_reverse(seq, grid: tuple) -> Tensor:
    """``[N, D]`` tokens back to a channel-first ``[D, H, W]`` map; token k lands at (k // W, k % W)."""
    seq = as_tensor(seq)
    h, w = grid
    if seq.ndim != 2 or seq.shape[0] != h * w:
        raise ContractError(f"{seq.shape[0] if seq.ndim else 0} tokens cannot fill grid {h}x{w}")
    return ops.transpose(ops.reshape(seq, (h, w, seq.shape[1])), (2, 0, 1))


# -- decoder -------------------------------------------------------------------

def init_decoder(store: ParameterStore, rng: np.random.Generator, in_dim: int, cfg: DecoderConfig) -> None:
    for i, (cin, cout, _, _) in enumerate(cfg.layers(in_dim)):
        add_conv(store, rng, f"decoder.block{i}", cin, cout)


def cnn_decode(x, cfg: DecoderConfig, store: ParameterStore, out_size: Optional[tuple] = None) -> Tensor:
    """Decode ``[D, H8, W8]`` to ``[3, 8*H8, 8*W8]`` (cropped to ``out_size`` if given).

    No output clamping happens here.
    """
    x = as_tensor(x)
    for i, (_, _, relu, upsample) in enumerate(cfg.layers(x.shape[0])):
        x = ops.conv2d(ops.reflect_pad_2d(x, 1, 1, 1, 1) if min(x.shape[1:]) > 1 else _edge_pad(x),
                       store[f"decoder.block{i}.weight"], store[f"decoder.block{i}.bias"])
        if relu:
            x = ops.relu(x)
        if upsample:
            x = ops.upsample_nearest2(x)
    if out_size is not None:
        h, w = out_size
        if h > x.shape[1] or w > x.shape[2]:
            raise ContractError(f"decoded {x.shape[1:]} smaller than requested {out_size}")
        if (h, w) != x.shape[1:]:
            x = x[:, :h, :w]
    return x


def _edge_pad(x: Tensor) -> Tensor:
    # a 1-pixel axis cannot be mirrored; replicate it instead
    _, h, w = x.shape
    rows = np.clip(np.arange(-1, h + 1), 0, h - 1)
    cols = np.clip(np.arange(-1, w + 1), 0, w - 1)
    return ops.take(ops.take(x, rows, axis=1), cols, axis=2)
