"""Weights container, binary PPM images and atomic file writes.

Weights layout (all integers unsigned 32-bit little-endian)::

    b"S2WT" | version | tensor count |
    { name length | UTF-8 name | rank | extents... | float32 LE payload }*
"""

from __future__ import annotations

import os
import struct
import tempfile
from collections import OrderedDict
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from .errors import FormatError
from .params import ParameterStore

MAGIC = b"S2WT"
VERSION = 1
PathLike = Union[str, os.PathLike]


def atomic_write(path: PathLike, payload: bytes) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- weights ---------------------------------------------------------------------

def encode_weights(tensors: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(getattr(arr, "data", arr))
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_weights(payload: bytes) -> "OrderedDict[str, np.ndarray]":
    """Parse a whole weights payload; raises :class:`FormatError` before returning anything partial."""
    view = memoryview(payload)
    pos = 0

    def take(n: int, what: str) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise FormatError(f"truncated weights file while reading {what} at byte {pos}")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    magic = bytes(take(4, "magic"))
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r} (\"S2WT\")")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise FormatError(f"unsupported weights format version {version}")
    out: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for i in range(count):
        (name_len,) = struct.unpack("<I", take(4, f"tensor {i} name length"))
        try:
            name = bytes(take(name_len, f"tensor {i} name")).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"tensor {i} name is not UTF-8") from exc
        if name in out:
            raise FormatError(f"duplicate tensor name {name!r}")
        (rank,) = struct.unpack("<I", take(4, f"{name} rank"))
        shape = struct.unpack(f"<{rank}I", take(4 * rank, f"{name} extents"))
        size = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(take(4 * size, f"{name} payload"), dtype="<f4").reshape(shape)
        out[name] = data.astype(np.float32)
    if pos != len(view):
        raise FormatError(f"{len(view) - pos} trailing bytes after {count} tensors")
    return out


def save_weights(store: Union[ParameterStore, Mapping[str, np.ndarray]], path: PathLike) -> None:
    items = store.items() if isinstance(store, ParameterStore) else store.items()
    atomic_write(path, encode_weights(OrderedDict((k, getattr(v, "data", v)) for k, v in items)))


def load_weights(path: PathLike) -> ParameterStore:
    try:
        payload = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read weights file {path}: {exc}") from exc
    arrays = decode_weights(payload)
    store = ParameterStore(np.float32)
    for name, arr in arrays.items():
        store.add(name, arr)
    return store


# -- PPM -------------------------------------------------------------------------

def _header_tokens(data: bytes, count: int):
    tokens = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PPM header")
        tokens.append(data[start:pos])
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError("PPM header must end with a single whitespace byte")
    return tokens, pos + 1


def decode_ppm(data: bytes) -> np.ndarray:
    """Binary P6 bytes to a float32 ``[3, H, W]`` array scaled into [0, 1]."""
    if data[:2] != b"P6":
        raise FormatError(f"not a binary PPM (P6): magic {data[:2]!r}")
    tokens, pos = _header_tokens(data, 4)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"bad PPM header values {tokens[1:]}") from exc
    if width < 1 or height < 1:
        raise FormatError(f"bad PPM extents {width}x{height}")
    if not 0 < maxval < 256:
        raise FormatError(f"only 8-bit PPM supported, maxval={maxval}")
    n = width * height * 3
    if len(data) - pos < n:
        raise FormatError(f"PPM pixel data truncated: need {n} bytes, have {len(data) - pos}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=n, offset=pos).reshape(height, width, 3)
    return (pixels.transpose(2, 0, 1).astype(np.float32) / np.float32(maxval))


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1], scale to 255 and round half up."""
    img = np.asarray(img, dtype=np.float64)
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def encode_ppm(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.ndim == 2:
        img = np.broadcast_to(img, (3,) + img.shape)
    if img.ndim != 3 or img.shape[0] != 3:
        raise FormatError(f"PPM images are [3, H, W], got {img.shape}")
    _, h, w = img.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + to_uint8(img).transpose(1, 2, 0).tobytes()


def read_ppm(path: PathLike) -> np.ndarray:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read image {path}: {exc}") from exc
    return decode_ppm(data)


def write_ppm(path: PathLike, img: np.ndarray) -> None:
    atomic_write(path, encode_ppm(img))


def write_gray(path: PathLike, values: np.ndarray) -> None:
    """Min-max normalize a 2-D map to [0, 1] and write it as a gray PPM."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    norm = (values - lo) / (hi - lo) if hi > lo else np.zeros_like(values)
    write_ppm(path, norm)
