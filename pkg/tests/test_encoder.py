import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from s2wat.encoder import EncoderConfig, encoder_forward, init_encoder, pad_grid, patch_embed, patch_merge, \
    stage_extents, unpad_grid
from s2wat.errors import ContractError, InputTooSmallError
from s2wat.params import ParameterStore


def test_patch_embed_grid_and_order():
    assert patch_embed(np.zeros((3, 224, 224)), np.zeros((12, 5)), np.zeros(5)).shape == (112, 112, 5)
    img = np.arange(3 * 2 * 2, dtype=float).reshape(3, 2, 2)
    flat = patch_embed(img, np.eye(12), np.zeros(12)).data[0, 0]
    # (row offset, column offset, channel)
    assert np.array_equal(flat[:3], img[:, 0, 0])
    assert np.array_equal(flat[3:6], img[:, 0, 1])
    assert np.array_equal(flat[6:9], img[:, 1, 0])


def test_patch_embed_zero():
    assert not np.any(patch_embed(np.zeros((3, 4, 6)), np.ones((12, 3)), np.zeros(3)).data)


def test_patch_embed_odd_extent():
    with pytest.raises(ContractError):
        patch_embed(np.zeros((3, 5, 4)), np.zeros((12, 2)), np.zeros(2))


def test_pad_grid_examples():
    x = np.random.default_rng(0).standard_normal((10, 12, 2))
    padded, rec = pad_grid(x, 3)
    assert padded.shape == (12, 12, 2) and rec.pad_bottom == 2 and rec.pad_right == 0
    assert np.array_equal(padded.data[10], x[8]) and np.array_equal(padded.data[11], x[7])
    same, rec = pad_grid(x[:, :, :], 1)
    assert same.shape == x.shape and rec.pad_bottom == rec.pad_right == 0


def test_pad_grid_too_small():
    with pytest.raises(InputTooSmallError):
        pad_grid(np.zeros((1, 4, 1)), 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(0, 9), st.integers(0, 9))
def test_pad_unpad_roundtrip(n, dh, dw):
    h, w = 2 * n + dh, 2 * n + dw
    x = np.random.default_rng(h * 31 + w).standard_normal((h, w, 2))
    padded, rec = pad_grid(x, n)
    assert padded.shape[0] % (2 * n) == 0 and padded.shape[1] % (2 * n) == 0
    assert np.array_equal(unpad_grid(padded, rec).data, x)


def test_patch_merge_channel_order():
    x = np.arange(16.0).reshape(4, 4, 1)
    out = patch_merge(x, np.eye(4)).data
    assert out.shape == (2, 2, 4)
    assert np.array_equal(out[0, 0], [x[0, 0, 0], x[1, 0, 0], x[0, 1, 0], x[1, 1, 0]])


def test_patch_merge_constant_input():
    x = np.full((4, 4, 2), 3.0)
    avg = np.tile(np.eye(2), (4, 1)) / 4
    assert np.allclose(patch_merge(x, avg).data, 3.0)


def test_stage_extents():
    assert stage_extents(32, 32) == [(16, 16), (8, 8), (4, 4)]
    assert stage_extents(30, 34) == [(15, 17), (8, 9), (4, 5)]


def test_encoder_stage_shapes():
    cfg = EncoderConfig(embed_dim=16, blocks_per_stage=(1, 1, 1), strip_widths=(2, 2, 2), heads_per_stage=(2, 2, 2))
    store = ParameterStore()
    init_encoder(store, np.random.default_rng(0), cfg)
    feats = encoder_forward(np.random.default_rng(1).random((3, 32, 32)), cfg, store)
    assert [f.shape for f in feats] == [(16, 16, 16), (8, 8, 32), (4, 4, 64)]
    assert store["encoder.merge2.weight"].shape == (64, 32)
    assert store["encoder.merge3.weight"].shape == (128, 64)


def test_config_dims():
    cfg = EncoderConfig()
    assert [cfg.stage_dim(k) for k in range(3)] == [96, 192, 384] and cfg.out_dim == 384
