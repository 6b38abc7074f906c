"""Strip and square window attention, Attn Merge fusion and the SpW block.

Layouts: a patch grid is ``[H_p, W_p, C]``; windowed token batches are
``[num_windows, window_len, C]`` with tokens row-major inside each window.
Linear weights are stored ``[in, out]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import ops
from .errors import ConfigurationError, DimensionError, GeometryError
from .params import ParameterStore, add_layer_norm, add_linear, trunc_normal
from .tensor import Tensor, as_tensor

KINDS = ("horizontal", "vertical", "square")


@dataclass(frozen=True)
class WindowGeometry:
    """One windowing scheme over an ``H_p x W_p`` patch grid.

    ``horizontal`` windows are ``n x W_p`` strips, ``vertical`` are
    ``H_p x n`` strips and ``square`` windows are ``2n x 2n``.
    """

    kind: str
    n: int
    grid: tuple

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown window kind {self.kind!r}")
        if self.n < 1:
            raise ConfigurationError("strip width must be >= 1")
        object.__setattr__(self, "grid", tuple(int(v) for v in self.grid))

    @property
    def window_shape(self) -> tuple:
        h, w = self.grid
        if self.kind == "horizontal":
            return (self.n, w)
        if self.kind == "vertical":
            return (h, self.n)
        return (2 * self.n, 2 * self.n)

    @property
    def window_len(self) -> int:
        wh, ww = self.window_shape
        return wh * ww

    @property
    def num_windows(self) -> int:
        h, w = self.grid
        wh, ww = self.window_shape
        return (h // wh) * (w // ww)

    def check(self) -> None:
        h, w = self.grid
        wh, ww = self.window_shape
        if h % wh or w % ww:
            raise GeometryError(f"{self.kind} window {wh}x{ww} does not tile grid {h}x{w}")


def window_partition(x, g: WindowGeometry) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 3 or tuple(x.shape[:2]) != g.grid:
        raise GeometryError(f"tensor {x.shape} does not match grid {g.grid}")
    g.check()
    h, w = g.grid
    wh, ww = g.window_shape
    c = x.shape[2]
    t = ops.reshape(x, (h // wh, wh, w // ww, ww, c))
    t = ops.transpose(t, (0, 2, 1, 3, 4))
    return ops.reshape(t, (g.num_windows, g.window_len, c))


def window_reverse(windows, g: WindowGeometry) -> Tensor:
    windows = as_tensor(windows)
    g.check()
    if windows.ndim != 3 or windows.shape[:2] != (g.num_windows, g.window_len):
        raise GeometryError(f"windows {windows.shape} do not match geometry {g}")
    h, w = g.grid
    wh, ww = g.window_shape
    c = windows.shape[2]
    t = ops.reshape(windows, (h // wh, w // ww, wh, ww, c))
    t = ops.transpose(t, (0, 2, 1, 3, 4))
    return ops.reshape(t, (h, w, c))


def relative_position_index(m: int) -> np.ndarray:
    """``[m*m, m*m]`` bucket ids of relative (dy, dx) inside an ``m x m`` window."""
    coords = np.stack(np.meshgrid(np.arange(m), np.arange(m), indexing="ij")).reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :] + (m - 1)
    return rel[0] * (2 * m - 1) + rel[1]


@dataclass
class RelPosBias:
    table: Tensor  # [(2M-1)^2, heads]
    m: int

    def __post_init__(self):
        self.index = relative_position_index(self.m)

    def matrix(self) -> Tensor:
        """Per-head bias ``[heads, M^2, M^2]`` gathered from the table."""
        heads = self.table.shape[1]
        length = self.m * self.m
        b = ops.take(self.table, self.index.reshape(-1), axis=0)
        b = ops.reshape(b, (length, length, heads))
        return ops.transpose(b, (2, 0, 1))


@dataclass
class AttentionParams:
    qkv_weight: Tensor
    qkv_bias: Tensor
    proj_weight: Tensor
    proj_bias: Tensor
    heads: int

    def __post_init__(self):
        c = self.proj_weight.shape[0]
        if c % self.heads:
            raise ConfigurationError(f"channels {c} not divisible by {self.heads} heads")

    @classmethod
    def from_store(cls, store: ParameterStore, prefix: str, heads: int) -> "AttentionParams":
        return cls(store[f"{prefix}.qkv.weight"], store[f"{prefix}.qkv.bias"],
                   store[f"{prefix}.proj.weight"], store[f"{prefix}.proj.bias"], heads)


def split_heads(x: Tensor, heads: int) -> Tensor:
    b, length, c = x.shape
    return ops.transpose(ops.reshape(x, (b, length, heads, c // heads)), (0, 2, 1, 3))


def merge_heads(x: Tensor) -> Tensor:
    b, heads, length, d = x.shape
    return ops.reshape(ops.transpose(x, (0, 2, 1, 3)), (b, length, heads * d))


def attend(q: Tensor, k: Tensor, v: Tensor, heads: int, bias: Optional[Tensor] = None):
    """Scaled dot-product attention over ``[B, L, C]`` projected tensors.

    Returns the head-concatenated output (before the output projection) and
    the attention map ``[B, heads, Lq, Lk]``.
    """
    d = q.shape[-1] // heads
    qh, kh, vh = split_heads(q, heads), split_heads(k, heads), split_heads(v, heads)
    logits = ops.matmul(ops.mul(qh, 1.0 / np.sqrt(d)), ops.swap_last(kh))
    if bias is not None:
        logits = ops.add(logits, bias)
    attn = ops.softmax_lastdim(logits)
    return merge_heads(ops.matmul(attn, vh)), attn


def self_attention(tokens: Tensor, p: AttentionParams, bias: Optional[Tensor] = None):
    """Multi-head self-attention over a batch of token sets ``[B, L, C]``."""
    c = tokens.shape[-1]
    qkv = ops.linear(tokens, p.qkv_weight, p.qkv_bias)
    q = qkv[..., :c]
    k = qkv[..., c:2 * c]
    v = qkv[..., 2 * c:]
    out, attn = attend(q, k, v, p.heads, bias)
    return ops.linear(out, p.proj_weight, p.proj_bias), attn


def window_attention(x, g: WindowGeometry, p: AttentionParams, bias: Optional[RelPosBias] = None,
                     return_attn: bool = False):
    """Multi-head attention inside each window of ``g``; output keeps ``x``'s shape.

    A relative position bias is only meaningful for square windows.
    """
    if bias is not None:
        if g.kind != "square":
            raise ConfigurationError("relative position bias is only defined for square windows")
        if bias.m != 2 * g.n:
            raise ConfigurationError(f"bias built for M={bias.m}, window needs M={2 * g.n}")
    windows = window_partition(x, g)
    out, attn = self_attention(windows, p, None if bias is None else bias.matrix())
    out = window_reverse(out, g)
    return (out, attn) if return_attn else out


def global_msa(x, p: AttentionParams, return_attn: bool = False):
    """Full self-attention over ``[N, C]`` tokens."""
    x = as_tensor(x)
    n, c = x.shape
    out, attn = self_attention(ops.reshape(x, (1, n, c)), p)
    out = ops.reshape(out, (n, c))
    return (out, attn[0]) if return_attn else out


def attn_merge(x, a, b, c, softmax: bool = False) -> Tensor:
    """Fuse ``a, b, c`` into ``x`` by per-token dot-product similarity.

    For token i, with candidates Y_i = (x_i, a_i, b_i, c_i), the output is
    sum_j <x_i, Y_ij> Y_ij.  Weights are raw dot products unless
    ``softmax`` is set.
    """
    x, a, b, c = (as_tensor(t) for t in (x, a, b, c))
    return merge_candidates(x, [a, b, c], softmax=softmax)


def merge_candidates(x: Tensor, others, softmax: bool = False) -> Tensor:
    shape = x.shape
    for t in others:
        if t.shape != shape:
            raise DimensionError(f"attn_merge operand {t.shape} != {shape}")
    d = shape[-1]
    n = int(np.prod(shape[:-1], dtype=np.int64))
    stacked = ops.stack([ops.reshape(t, (n, d)) for t in (x, *others)], axis=1)  # [n, k, d]
    ref = ops.reshape(x, (n, 1, d))
    weights = ops.matmul(ref, ops.swap_last(stacked))  # [n, 1, k]
    if softmax:
        weights = ops.softmax_lastdim(weights)
    return ops.reshape(ops.matmul(weights, stacked), shape)


# -- SpW Attention block -------------------------------------------------------

@dataclass(frozen=True)
class BlockOptions:
    """Switches for the attention block.

    ``attention`` selects the token mixer: ``"spw"`` (three windows fused),
    ``"window"`` (square windows only) or ``"global"`` (full MSA, the
    diagnostic probe configuration).  ``fusion`` replaces Attn Merge by a
    plain sum when set to ``"sum"``.
    """

    attention: str = "spw"
    fusion: str = "attn_merge"
    branches: tuple = KINDS
    attn_merge_softmax: bool = False
    mlp_ratio: int = 4

    def __post_init__(self):
        if self.attention not in ("spw", "window", "global"):
            raise ConfigurationError(f"unknown attention mode {self.attention!r}")
        if self.fusion not in ("attn_merge", "sum"):
            raise ConfigurationError(f"unknown fusion {self.fusion!r}")
        object.__setattr__(self, "branches", tuple(self.branches))
        if not self.branches or any(b not in KINDS for b in self.branches):
            raise ConfigurationError(f"bad branch list {self.branches!r}")

    @property
    def active_branches(self) -> tuple:
        if self.attention == "spw":
            return self.branches
        if self.attention == "window":
            return ("square",)
        return ("global",)


def init_attention(store: ParameterStore, rng: np.random.Generator, prefix: str, dim: int) -> None:
    add_linear(store, rng, f"{prefix}.qkv", dim, 3 * dim)
    add_linear(store, rng, f"{prefix}.proj", dim, dim)


def init_spw_block(store: ParameterStore, rng: np.random.Generator, prefix: str, dim: int,
                   n: int, heads: int, options: BlockOptions = BlockOptions()) -> None:
    if dim % heads:
        raise ConfigurationError(f"channels {dim} not divisible by {heads} heads")
    add_layer_norm(store, f"{prefix}.norm1", dim)
    for branch in options.active_branches:
        init_attention(store, rng, f"{prefix}.{branch}", dim)
        if branch == "square":
            m = 2 * n
            store.add(f"{prefix}.square.rel_bias", trunc_normal(rng, ((2 * m - 1) ** 2, heads)))
    add_layer_norm(store, f"{prefix}.norm2", dim)
    add_linear(store, rng, f"{prefix}.mlp.fc1", dim, options.mlp_ratio * dim)
    add_linear(store, rng, f"{prefix}.mlp.fc2", options.mlp_ratio * dim, dim)


def spw_attention(u: Tensor, store: ParameterStore, prefix: str, n: int, heads: int,
                  options: BlockOptions = BlockOptions()) -> Tensor:
    """Token mixer of the block on a normalized grid ``u``: branch attentions fused."""
    h, w, c = u.shape
    outputs = []
    for branch in options.active_branches:
        p = AttentionParams.from_store(store, f"{prefix}.{branch}", heads)
        if branch == "global":
            outputs.append(ops.reshape(global_msa(ops.reshape(u, (h * w, c)), p), (h, w, c)))
            continue
        g = WindowGeometry(branch, n, (h, w))
        bias = RelPosBias(store[f"{prefix}.square.rel_bias"], 2 * n) if branch == "square" else None
        outputs.append(window_attention(u, g, p, bias))
    if options.attention != "spw":
        return outputs[0]
    if options.fusion == "sum":
        total = u
        for o in outputs:
            total = ops.add(total, o)
        return total
    return merge_candidates(u, outputs, softmax=options.attn_merge_softmax)


def mlp(x: Tensor, store: ParameterStore, prefix: str) -> Tensor:
    hidden = ops.gelu(ops.linear(x, store[f"{prefix}.fc1.weight"], store[f"{prefix}.fc1.bias"]))
    return ops.linear(hidden, store[f"{prefix}.fc2.weight"], store[f"{prefix}.fc2.bias"])


def layer_norm(x: Tensor, store: ParameterStore, prefix: str) -> Tensor:
    return ops.layer_norm(x, store[f"{prefix}.weight"], store[f"{prefix}.bias"])


def spw_block(z, store: ParameterStore, prefix: str, n: int, heads: int,
              options: BlockOptions = BlockOptions()) -> Tensor:
    """One SpW Attention block on an already padded grid ``[H_p, W_p, C]``.

    u = LN(z); z~ = Merge(u, horizontal(u), vertical(u), square(u)) + z;
    out = MLP(LN(z~)) + z~.
    """
    z = as_tensor(z)
    u = layer_norm(z, store, f"{prefix}.norm1")
    mixed = ops.add(spw_attention(u, store, prefix, n, heads, options), z)
    return ops.add(mlp(layer_norm(mixed, store, f"{prefix}.norm2"), store, f"{prefix}.mlp"), mixed)
