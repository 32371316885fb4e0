"""Flat binary array blobs used for checkpoints and feature maps.

Layout (all little-endian)::

    b"CLIC1"
    uint32 array_count
    per array: uint32 ndim, ndim x uint32 dims
    float32 data of every array, in order, row-major
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .nn import EncoderParams, param_shapes

MAGIC = b"CLIC1"


class BlobFormatError(ValueError):
    pass


def dumps_blob(arrays: list[np.ndarray]) -> bytes:
    header = [MAGIC, struct.pack("<I", len(arrays))]
    for a in arrays:
        header.append(struct.pack("<I", a.ndim))
        header.append(struct.pack(f"<{a.ndim}I", *a.shape))
    body = [np.ascontiguousarray(a, dtype="<f4").tobytes() for a in arrays]
    return b"".join(header + body)


def loads_blob(data: bytes) -> list[np.ndarray]:
    if not data.startswith(MAGIC):
        raise BlobFormatError("missing CLIC1 magic")
    pos = len(MAGIC)
    try:
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shapes = []
        for _ in range(count):
            (ndim,) = struct.unpack_from("<I", data, pos)
            pos += 4
            shapes.append(struct.unpack_from(f"<{ndim}I", data, pos))
            pos += 4 * ndim
    except struct.error as exc:
        raise BlobFormatError(f"truncated header: {exc}") from exc
    arrays = []
    for shape in shapes:
        n = int(np.prod(shape, dtype=np.int64))
        end = pos + 4 * n
        if end > len(data):
            raise BlobFormatError("truncated array data")
        arrays.append(np.frombuffer(data[pos:end], dtype="<f4").reshape(shape).astype(np.float64))
        pos = end
    if pos != len(data):
        raise BlobFormatError(f"{len(data) - pos} trailing bytes")
    return arrays


def write_blob(arrays: list[np.ndarray], path: str | Path) -> None:
    Path(path).write_bytes(dumps_blob(arrays))


def read_blob(path: str | Path) -> list[np.ndarray]:
    return loads_blob(Path(path).read_bytes())


def save_params(params: EncoderParams, path: str | Path) -> None:
    write_blob(list(params.values()), path)


def load_params(path: str | Path) -> EncoderParams:
    arrays = read_blob(path)
    names = list(param_shapes())
    if len(arrays) != len(names):
        raise BlobFormatError(f"expected {len(names)} encoder arrays, found {len(arrays)}")
    return EncoderParams(dict(zip(names, arrays)))
