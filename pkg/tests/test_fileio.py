import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from s2wat.errors import FormatError
from s2wat.fileio import (decode_ppm, decode_weights, encode_ppm, encode_weights, load_weights, read_ppm,
                          save_weights, to_uint8, write_gray)


def _tensors():
    rng = np.random.default_rng(0)
    return {"a.weight": rng.standard_normal((2, 3)).astype(np.float32), "b": np.float32(1.5) * np.ones(4, np.float32),
            "scalar": np.array(2.0, np.float32)}


def test_weights_layout():
    payload = encode_weights({"x": np.array([1.0], np.float32)})
    assert payload[:4] == b"S2WT"
    assert struct.unpack("<III", payload[4:16]) == (1, 1, 1)
    assert payload[16:17] == b"x"
    assert struct.unpack("<IIf", payload[17:]) == (1, 1, 1.0)


def test_weights_roundtrip_is_byte_identical(tmp_path):
    path = tmp_path / "w.bin"
    save_weights(_tensors(), path)
    store = load_weights(path)
    assert store.names() == list(_tensors())
    save_weights(store, tmp_path / "again.bin")
    assert path.read_bytes() == (tmp_path / "again.bin").read_bytes()


@pytest.mark.parametrize("cut", [2, 10, 20, -1])
def test_truncated_weights(cut):
    with pytest.raises(FormatError, match="truncated|magic"):
        decode_weights(encode_weights(_tensors())[:cut])


def test_weights_header_errors(tmp_path):
    payload = encode_weights(_tensors())
    with pytest.raises(FormatError, match="magic"):
        decode_weights(b"XXXX" + payload[4:])
    with pytest.raises(FormatError, match="version"):
        decode_weights(payload[:4] + struct.pack("<I", 7) + payload[8:])
    with pytest.raises(FormatError, match="trailing"):
        decode_weights(payload + b"\0")
    with pytest.raises(FormatError):
        load_weights(tmp_path / "missing.bin")


def test_ppm_rounds_half_up():
    assert list(to_uint8(np.array([0.5 / 255, 1.5 / 255, -1.0, 2.0, 0.5]))) == [1, 2, 0, 255, 128]


def test_ppm_header_comments_and_maxval():
    body = bytes([0, 0, 0, 15, 15, 15])
    img = decode_ppm(b"P6\n# made by hand\n2 1 # width height\n15\n" + body)
    assert img.shape == (3, 1, 2)
    assert np.array_equal(img[:, 0, 1], [1.0, 1.0, 1.0])


@pytest.mark.parametrize("data", [b"P3\n1 1\n255\n...", b"P6\n1 1\n255\n\0\0", b"P6\n1 1\n65535\n" + b"\0" * 6,
                                  b"P6\n0 1\n255\n", b"P6\n1"])
def test_ppm_errors(data):
    with pytest.raises(FormatError):
        decode_ppm(data)


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.uint8, hnp.array_shapes(min_dims=3, max_dims=3, min_side=1, max_side=6).map(
    lambda s: (3,) + s[1:])))
def test_ppm_roundtrip(pixels):
    img = pixels.astype(np.float32) / 255
    back = decode_ppm(encode_ppm(img))
    assert np.array_equal(to_uint8(back), pixels)


def test_gray_map_file(tmp_path):
    write_gray(tmp_path / "g.ppm", np.array([[0.0, 2.0], [1.0, 1.0]]))
    img = read_ppm(tmp_path / "g.ppm")
    assert img.shape == (3, 2, 2) and img[0, 0, 1] == 1.0 and img[2, 0, 0] == 0.0
    write_gray(tmp_path / "flat.ppm", np.ones((2, 2)))
    assert not read_ppm(tmp_path / "flat.ppm").any()
