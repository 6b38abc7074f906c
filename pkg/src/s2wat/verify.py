"""Self-contained invariant checks behind the ``verify`` subcommand."""

from __future__ import annotations

import tempfile
import time
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from . import ops
from .attention import (AttentionParams, WindowGeometry, attn_merge,
                        init_spw_block, spw_block, window_attention, window_partition, window_reverse)
from .complexity import run_grid
from .encoder import pad_grid, unpad_grid
from .fileio import decode_ppm, encode_ppm, encode_weights, load_weights, save_weights
from .gradcheck import check_gradients
from .losses import FeatureExtractor, LossWeights, content_loss, style_loss, total_loss
from .params import ParameterStore
from .tensor import Tensor


class CheckResult(NamedTuple):
    name: str
    ok: bool
    detail: str
    seconds: float


def _softmax_rows() -> str:
    rng = np.random.default_rng(0)
    x = rng.standard_normal((64, 9))
    a = ops.softmax_lastdim(x).data
    b = ops.softmax_lastdim(x + 7.5).data
    err = max(np.abs(a.sum(-1) - 1).max(), np.abs(a - b).max())
    assert err < 1e-6, err
    return f"max deviation {err:.2e}"


def _attn_merge_oracle() -> str:
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(20):
        n, d = rng.integers(1, 9), rng.integers(1, 17)
        x, a, b, c = (rng.standard_normal((n, d)) for _ in range(4))
        got = attn_merge(x, a, b, c).data
        ref = np.zeros((n, d))
        for i in range(n):
            for y in (x[i], a[i], b[i], c[i]):
                ref[i] += np.dot(x[i], y) * y
        worst = max(worst, np.abs(got - ref).max())
    assert worst < 1e-10, worst
    return f"max abs diff {worst:.2e}"


def _window_roundtrip() -> str:
    rng = np.random.default_rng(2)
    for kind in ("horizontal", "vertical", "square"):
        for n, grid in ((1, (4, 6)), (2, (8, 4))):
            g = WindowGeometry(kind, n, grid)
            x = rng.standard_normal(grid + (3,))
            assert np.array_equal(window_reverse(window_partition(x, g), g).data, x)
    return "3 kinds exact"


def _window_oracle() -> str:
    rng = np.random.default_rng(3)
    h, w, c, heads = 4, 4, 4, 2
    x = rng.standard_normal((h, w, c))
    p = AttentionParams(Tensor(rng.standard_normal((c, 3 * c))), Tensor(rng.standard_normal(3 * c)),
                        Tensor(np.eye(c)), Tensor(np.zeros(c)), heads)
    g = WindowGeometry("horizontal", 2, (h, w))
    got = window_attention(x, g, p).data.reshape(h * w, c)
    tokens = x.reshape(h * w, c)
    qkv = tokens @ p.qkv_weight.data + p.qkv_bias.data
    rows = np.arange(h * w) // w
    same = (rows[:, None] // 2) == (rows[None, :] // 2)
    d = c // heads
    out = np.zeros_like(tokens)
    for hd in range(heads):
        q = qkv[:, hd * d:(hd + 1) * d]
        k = qkv[:, c + hd * d:c + (hd + 1) * d]
        v = qkv[:, 2 * c + hd * d:2 * c + (hd + 1) * d]
        logits = np.where(same, q @ k.T / np.sqrt(d), -np.inf)
        att = np.exp(logits - logits.max(1, keepdims=True))
        att /= att.sum(1, keepdims=True)
        out[:, hd * d:(hd + 1) * d] = att @ v
    err = np.abs(got - out).max()
    assert err < 1e-6, err
    return f"max abs diff {err:.2e}"


def _spw_gradients() -> str:
    rng = np.random.default_rng(4)
    store = ParameterStore(np.float64)
    init_spw_block(store, rng, "b", 4, 1, 2)
    z = Tensor(rng.standard_normal((4, 4, 4)))
    weight = rng.standard_normal((4, 4, 4))
    err = check_gradients(lambda: ops.sum(ops.mul(spw_block(z, store, "b", 1, 2), weight)),
                          [z] + store.tensors(), max_coords=12)
    assert err < 1e-4, err
    return f"max relative error {err:.2e}"


def _complexity() -> str:
    report = run_grid(sizes=(8, 16), ms=(2, 4), cs=(8,))
    bad = report.failures()
    assert not bad, report.breakdowns()
    return f"{len(report.rows)} grid points agree"


def _roundtrips() -> str:
    rng = np.random.default_rng(5)
    x = rng.standard_normal((7, 5, 3))
    padded, rec = pad_grid(x, 2)
    assert np.array_equal(unpad_grid(padded, rec).data, x)
    store = ParameterStore()
    store.add("a.weight", rng.standard_normal((3, 4)))
    store.add("a.bias", rng.standard_normal(4))
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "w.s2wt"
        save_weights(store, path)
        first = path.read_bytes()
        save_weights(load_weights(path), path)
        assert path.read_bytes() == first == encode_weights(store.state())
    img = rng.integers(0, 256, (3, 5, 6)).astype(np.float64) / 255
    raw = encode_ppm(img)
    assert encode_ppm(decode_ppm(raw)) == raw
    return "pad, weights, PPM exact"


def _loss_axioms() -> str:
    rng = np.random.default_rng(6)
    phi = FeatureExtractor.surrogate(0, dtype=np.float64)
    a = rng.random((3, 32, 32))
    b = rng.random((3, 32, 32))
    assert float(content_loss(a, a, phi).data) == 0.0
    assert float(style_loss(a, a, phi).data) == 0.0
    assert float(content_loss(a, b, phi).data) > 0 and float(style_loss(a, b, phi).data) > 0
    assert total_loss((1, 1, 1, 1), LossWeights()) == 56
    return "zero on identical inputs; (1,1,1,1) -> 56"


CHECKS: list[tuple[str, Callable[[], str]]] = [
    ("softmax rows", _softmax_rows),
    ("attn merge oracle", _attn_merge_oracle),
    ("window roundtrip", _window_roundtrip),
    ("window attention oracle", _window_oracle),
    ("spw block gradients", _spw_gradients),
    ("complexity formulas", _complexity),
    ("file roundtrips", _roundtrips),
    ("loss axioms", _loss_axioms),
]


def run_checks() -> list:
    results = []
    for name, fn in CHECKS:
        start = time.perf_counter()
        try:
            detail, ok = fn(), True
        except AssertionError as exc:
            detail, ok = f"failed: {exc}", False
        results.append(CheckResult(name, ok, detail, time.perf_counter() - start))
    return results
