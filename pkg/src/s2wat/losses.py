"""Perceptual content/style losses, identity losses and their weighted total.

All ``||.||`` distances are mean squared errors (no square root).
"""

from __future__ import annotations

import contextlib

import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, NamedTuple, Optional

import numpy as np

from . import ops
from .errors import ConfigurationError, ContractError, DimensionError
from .params import ParameterStore
from .tensor import Tensor, as_tensor, no_grad

TAPS = ("relu1_1", "relu2_1", "relu3_1", "relu4_1", "relu5_1")
CONTENT_TAPS = ("relu4_1", "relu5_1")
STYLE_TAPS = ("relu2_1", "relu3_1", "relu4_1", "relu5_1")
METRIC_STYLE_TAPS = TAPS
IDENTITY_TAPS = STYLE_TAPS
SURROGATE_WIDTHS = (16, 32, 64, 64, 64)
NORM_EPS = 1e-5
MIN_EXTENT = 32


@dataclass(frozen=True)
class LossWeights:
    content: float = 2.0
    style: float = 3.0
    id1: float = 50.0
    id2: float = 1.0

    def __post_init__(self):
        if min(self.content, self.style, self.id1, self.id2) < 0:
            raise ConfigurationError("loss weights must be non-negative")


class LossParts(NamedTuple):
    content: Tensor
    style: Tensor
    id1: Tensor
    id2: Tensor


class FeatureExtractor:
    """Frozen VGG-shaped network exposing ``relu{k}_1`` taps.

    Parameters are named ``vgg.conv{block}_{index}.{weight,bias}``.  Block k
    runs its convolutions (reflect-padded 3x3, ReLU) and is followed by 2x2
    max pooling, so tap extents halve from one block to the next.
    """

    def __init__(self, store: ParameterStore, source: str = "external") -> None:
        self.store = store.freeze()
        self.source = source
        counts: dict[int, int] = {}
        for name in store:
            m = re.fullmatch(r"vgg\.conv(\d)_(\d+)\.weight", name)
            if m:
                b, i = int(m.group(1)), int(m.group(2))
                counts[b] = max(counts.get(b, 0), i)
        if not counts or sorted(counts) != list(range(1, len(counts) + 1)):
            raise ConfigurationError("extractor weights need vgg.conv1_1 onwards with contiguous blocks")
        self.convs = [counts[b] for b in sorted(counts)]

    @classmethod
    def surrogate(cls, seed: int = 0, widths: tuple = SURROGATE_WIDTHS, dtype=np.float32) -> "FeatureExtractor":
        """Fixed-seed random network with one He-initialised conv per block."""
        rng = np.random.default_rng(seed)
        store = ParameterStore(dtype)
        cin = 3
        for b, cout in enumerate(widths, start=1):
            fan_in = cin * 9
            store.add(f"vgg.conv{b}_1.weight", rng.normal(0.0, np.sqrt(2.0 / fan_in), (cout, cin, 3, 3)))
            store.add(f"vgg.conv{b}_1.bias", rng.normal(0.0, 0.01, cout))
            cin = cout
        return cls(store, source=f"surrogate(seed={seed})")

    @property
    def available_taps(self) -> tuple:
        return TAPS[: len(self.convs)]

    def astype(self, dtype) -> "FeatureExtractor":
        return FeatureExtractor(self.store.astype(dtype), self.source)

    def extract(self, img, taps: Iterable[str] = TAPS) -> dict:
        """Map each requested tap name to its ``[..., C, h, w]`` activation."""
        taps = tuple(taps)
        unknown = [t for t in taps if t not in self.available_taps]
        if unknown:
            raise ConfigurationError(f"unknown tap(s) {unknown}; available {self.available_taps}")
        img = as_tensor(img)
        if img.ndim < 3 or img.shape[-3] != 3:
            raise ContractError(f"extractor expects [..., 3, H, W], got {img.shape}")
        if min(img.shape[-2:]) < MIN_EXTENT:
            raise ContractError(f"extractor needs H, W >= {MIN_EXTENT}, got {img.shape[-2:]}")
        last = max(TAPS.index(t) for t in taps) + 1 if taps else 0
        out = {}
        x = img
        for b in range(1, last + 1):
            if b > 1:
                x = ops.max_pool2(x)
            for i in range(1, self.convs[b - 1] + 1):
                x = ops.relu(ops.conv2d(ops.reflect_pad_2d(x, 1, 1, 1, 1),
                                        self.store[f"vgg.conv{b}_{i}.weight"],
                                        self.store[f"vgg.conv{b}_{i}.bias"]))
                if i == 1 and f"relu{b}_1" in taps:
                    out[f"relu{b}_1"] = x
        return out

    __call__ = extract


# -- statistics ----------------------------------------------------------------

def mse(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"extent mismatch {a.shape} vs {b.shape}")
    diff = ops.sub(a, b)
    return ops.mean(ops.mul(diff, diff))


def channel_mean_std(f, eps: float = NORM_EPS):
    """Per-channel spatial mean and sqrt(variance + eps) of ``[..., C, H, W]``."""
    f = as_tensor(f)
    mu = ops.mean(f, axis=(-2, -1), keepdims=True)
    centered = ops.sub(f, mu)
    var = ops.mean(ops.mul(centered, centered), axis=(-2, -1), keepdims=True)
    return mu, ops.sqrt(ops.add(var, eps))


def mean_variance_normalize(f, eps: float = NORM_EPS) -> Tensor:
    mu, sigma = channel_mean_std(f, eps)
    return ops.div(ops.sub(f, mu), sigma)


def content_loss_features(f_cs: Mapping, f_c: Mapping, taps=CONTENT_TAPS) -> Tensor:
    total = None
    for tap in taps:
        term = mse(mean_variance_normalize(f_cs[tap]), mean_variance_normalize(f_c[tap]))
        total = term if total is None else ops.add(total, term)
    return total


def style_loss_features(f_cs: Mapping, f_s: Mapping, taps=STYLE_TAPS) -> Tensor:
    total = None
    for tap in taps:
        mu_a, sd_a = channel_mean_std(f_cs[tap])
        mu_b, sd_b = channel_mean_std(f_s[tap])
        term = ops.add(mse(mu_a, mu_b), mse(sd_a, sd_b))
        total = term if total is None else ops.add(total, term)
    return total


def feature_distance(f_a: Mapping, f_b: Mapping, taps=IDENTITY_TAPS) -> Tensor:
    total = None
    for tap in taps:
        term = mse(f_a[tap], f_b[tap])
        total = term if total is None else ops.add(total, term)
    return total


def _check_pair(a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"image extents differ: {a.shape} vs {b.shape}")


def content_loss(i_cs, i_c, phi: FeatureExtractor, taps=CONTENT_TAPS) -> Tensor:
    """Distance between mean-variance normalized features at the content taps."""
    i_cs, i_c = as_tensor(i_cs), as_tensor(i_c)
    _check_pair(i_cs, i_c)
    return content_loss_features(phi.extract(i_cs, taps), phi.extract(i_c, taps), taps)


def style_loss(i_cs, i_s, phi: FeatureExtractor, taps=STYLE_TAPS) -> Tensor:
    """Sum over taps of mean and standard-deviation mismatches."""
    i_cs, i_s = as_tensor(i_cs), as_tensor(i_s)
    return style_loss_features(phi.extract(i_cs, taps), phi.extract(i_s, taps), taps)


def identity_losses(model: Callable, i_c, i_s, phi: FeatureExtractor, taps=IDENTITY_TAPS):
    """``(L_id1, L_id2)`` from reconstructions ``model(I_c, I_c)`` and ``model(I_s, I_s)``."""
    i_c, i_s = as_tensor(i_c), as_tensor(i_s)
    i_cc = as_tensor(model(i_c, i_c))
    i_ss = as_tensor(model(i_s, i_s))
    _check_pair(i_cc, i_c)
    _check_pair(i_ss, i_s)
    id1 = ops.add(mse(i_cc, i_c), mse(i_ss, i_s))
    id2 = ops.add(feature_distance(phi.extract(i_cc, taps), phi.extract(i_c, taps), taps),
                  feature_distance(phi.extract(i_ss, taps), phi.extract(i_s, taps), taps))
    return id1, id2


def total_loss(parts, w: LossWeights = LossWeights()):
    """Weighted sum content*2 + style*3 + id1*50 + id2*1 by default."""
    content, style, id1, id2 = parts
    terms = [(w.content, content), (w.style, style), (w.id1, id1), (w.id2, id2)]
    if not any(isinstance(p, Tensor) for _, p in terms):
        return sum(float(lam) * float(p) for lam, p in terms)
    total = None
    for lam, p in terms:
        term = ops.mul(as_tensor(p), float(lam))
        total = term if total is None else ops.add(total, term)
    return total


def compute_loss_parts(i_cs: Tensor, i_cc: Tensor, i_ss: Tensor, i_c: Tensor, i_s: Tensor,
                       phi: FeatureExtractor, style_taps=STYLE_TAPS) -> LossParts:
    """All four terms with each image passed through the extractor once.

    Target features are built without a graph unless a target requires grad.
    """
    taps = tuple(sorted(set(CONTENT_TAPS) | set(style_taps) | set(IDENTITY_TAPS), key=TAPS.index))
    targets_fixed = not (i_c.requires_grad or i_s.requires_grad)
    with no_grad() if targets_fixed else contextlib.nullcontext():
        f_c = phi.extract(i_c, taps)
        f_s = phi.extract(i_s, taps)
    f_cs = phi.extract(i_cs, taps)
    f_cc = phi.extract(i_cc, IDENTITY_TAPS)
    f_ss = phi.extract(i_ss, IDENTITY_TAPS)
    return LossParts(
        content=content_loss_features(f_cs, f_c),
        style=style_loss_features(f_cs, f_s, style_taps),
        id1=ops.add(mse(i_cc, i_c), mse(i_ss, i_s)),
        id2=ops.add(feature_distance(f_cc, f_c), feature_distance(f_ss, f_s)),
    )


def as_float(x: Optional[Tensor]) -> float:
    return float(np.asarray(x.data if isinstance(x, Tensor) else x))
