import numpy as np
import pytest

from s2wat.errors import ContractError, InputTooSmallError
from s2wat.model import S2WAT, desk_config
from s2wat.params import ParameterStore
from s2wat.tensor import Tensor
from s2wat.transfer import (DecoderConfig, TransferConfig, cnn_decode, flatten_grid, init_decoder, init_transfer,
                            patch_reverse, transfer_forward, transfer_layer)


def _transfer_store(dim=8, depth=1, heads=2, seed=0):
    store = ParameterStore(np.float64)
    init_transfer(store, np.random.default_rng(seed), dim, TransferConfig(depth=depth, heads=heads))
    return store


def test_layer_names():
    names = _transfer_store().names()
    for part in ("ln1", "msa.qkv", "msa.proj", "ln2", "mha.q", "mha.k", "mha.v", "mha.proj", "ln3",
                 "mlp.fc1", "mlp.fc2"):
        assert f"transfer.layer0.{part}.weight" in names


def test_zeroed_branches_reduce_to_residual_path():
    store = _transfer_store()
    for name in store.names():
        if ".mha." in name or ".mlp." in name:
            store[name].data[...] = 0.0
    rng = np.random.default_rng(1)
    c, s = rng.standard_normal((6, 8)), rng.standard_normal((3, 8))
    out = transfer_layer(c, s, store, "transfer.layer0", 2).data
    # with only the self-attention branch left, the style tokens must not matter
    other = transfer_layer(c, rng.standard_normal((5, 8)), store, "transfer.layer0", 2).data
    assert np.allclose(out, other)
    for name in store.names():
        if ".msa.proj" in name:
            store[name].data[...] = 0.0
    assert np.allclose(transfer_layer(c, s, store, "transfer.layer0", 2).data, c)


def test_attention_rows_sum_to_one():
    rng = np.random.default_rng(2)
    _, attn = transfer_layer(rng.standard_normal((6, 8)), rng.standard_normal((4, 8)), _transfer_store(),
                             "transfer.layer0", 2, return_attn=True)
    assert attn.shape == (2, 6, 4)
    assert np.allclose(attn.data.sum(-1), 1.0, atol=1e-12)


def test_depth_zero_is_identity():
    x = np.random.default_rng(3).standard_normal((4, 8))
    assert np.array_equal(transfer_forward(x, x, TransferConfig(depth=0), ParameterStore()).data, x)


def test_style_token_order_does_not_matter():
    rng = np.random.default_rng(4)
    store = _transfer_store()
    c, s = rng.standard_normal((6, 8)), rng.standard_normal((5, 8))
    a = transfer_layer(c, s, store, "transfer.layer0", 2).data
    b = transfer_layer(c, s[rng.permutation(5)], store, "transfer.layer0", 2).data
    assert np.allclose(a, b)


def test_patch_reverse_layout_and_roundtrip():
    seq = np.arange(12.0).reshape(6, 2)
    grid = patch_reverse(seq, (2, 3)).data
    assert grid.shape == (2, 2, 3)
    assert grid[1, 1, 2] == seq[5, 1]
    assert np.array_equal(flatten_grid(np.transpose(grid, (1, 2, 0))).data, seq)
    assert patch_reverse(np.ones((1, 4)), (1, 1)).shape == (4, 1, 1)
    with pytest.raises(ContractError):
        patch_reverse(np.ones((5, 4)), (2, 3))


def test_decoder_layers_and_shapes():
    cfg = DecoderConfig(convs_per_scale=2)
    layers = cfg.layers(64)
    assert [(a, b) for a, b, _, _ in layers] == [(64, 32), (32, 32), (32, 16), (16, 16), (16, 8), (8, 8), (8, 3)]
    assert sum(up for *_, up in layers) == 3
    assert layers[-1][2] is False
    store = ParameterStore(np.float64)
    init_decoder(store, np.random.default_rng(0), 64, cfg)
    out = cnn_decode(np.random.default_rng(1).standard_normal((64, 4, 5)), cfg, store)
    assert out.shape == (3, 32, 40)
    assert cnn_decode(np.ones((64, 1, 1)), cfg, store).shape == (3, 8, 8)


def test_decoder_zero_weights_zero_image():
    cfg = DecoderConfig(convs_per_scale=1)
    store = ParameterStore(np.float64)
    init_decoder(store, np.random.default_rng(0), 16, cfg)
    for t in store.tensors():
        t.data[...] = 0.0
    assert not np.any(cnn_decode(np.ones((16, 2, 2)), cfg, store).data)


def test_model_output_matches_input_extent(desk_model):
    rng = np.random.default_rng(5)
    for h, w in ((32, 32), (33, 31), (40, 48)):
        assert desk_model.stylize(rng.random((3, h, w)), rng.random((3, 32, 32))).shape == (3, h, w)


def test_model_rejects_tiny_images(desk_model):
    with pytest.raises(InputTooSmallError):
        desk_model.stylize(np.zeros((3, 16, 16), np.float32), np.zeros((3, 32, 32), np.float32))


def test_model_is_deterministic_per_seed():
    a = S2WAT.initialize(desk_config(), seed=3)
    b = S2WAT.initialize(desk_config(), seed=3)
    assert all(np.array_equal(a.params[n].data, b.params[n].data) for n in a.params.names())
    img = np.random.default_rng(6).random((3, 32, 32)).astype(np.float32)
    assert np.array_equal(a.stylize(img, img), b.stylize(img, img))
    assert a.stylize(img, img).dtype == np.float32


def test_triplet_first_output_is_forward(desk_model):
    rng = np.random.default_rng(7)
    c, s = rng.random((3, 32, 32)).astype(np.float32), rng.random((3, 32, 32)).astype(np.float32)
    i_cs, i_cc, i_ss = desk_model.forward_triplet(Tensor(c), Tensor(s))
    assert np.allclose(i_cs.data, desk_model.stylize(c, s))
    assert np.allclose(i_cc.data, desk_model.stylize(c, c))
    assert np.allclose(i_ss.data, desk_model.stylize(s, s))
