"""
Parameter checkpoint container.

Byte layout (all integers little-endian), see docs/checkpoint-format.md:

    magic      8 bytes   b"DIFFCORE"
    version    uint32    FORMAT_VERSION
    count      uint32    number of parameters
    then per parameter, in model order:
        name_len   uint16
        name       name_len bytes, UTF-8
        trainable  uint8 (0 or 1)
        ndim       uint8
        dims       ndim x uint32
        values     prod(dims) x float64, row-major
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from app.core.errors import CheckpointError
from app.core.files import atomic_write_bytes
from app.diffcore.tensor import ModelParams

MAGIC = b"DIFFCORE"
FORMAT_VERSION = 1


def encode_params(params: ModelParams) -> bytes:
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(params))]
    for param in params:
        name = param.name.encode("utf-8")
        values = np.ascontiguousarray(param.tensor.values, dtype="<f8")
        chunks.append(struct.pack("<H", len(name)))
        chunks.append(name)
        chunks.append(struct.pack("<BB", int(param.trainable), values.ndim))
        chunks.append(struct.pack(f"<{values.ndim}I", *values.shape))
        chunks.append(values.tobytes())
    return b"".join(chunks)


def decode_params(data: bytes) -> ModelParams:
    """Parse a checkpoint payload into a fresh parameter collection."""
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a diffcore checkpoint (bad magic)")
    offset = len(MAGIC)
    try:
        version, count = struct.unpack_from("<II", data, offset)
        offset += 8
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        params = ModelParams()
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            name = data[offset : offset + name_len].decode("utf-8")
            offset += name_len
            trainable, ndim = struct.unpack_from("<BB", data, offset)
            offset += 2
            shape = struct.unpack_from(f"<{ndim}I", data, offset)
            offset += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            values = np.frombuffer(data, dtype="<f8", count=size, offset=offset)
            offset += 8 * size
            params.add(name, values.reshape(shape), trainable=bool(trainable))
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from exc
    except ValueError as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
    if offset != len(data):
        raise CheckpointError("trailing bytes after last parameter")
    return params


def save_params(params: ModelParams, path: str | Path) -> Path:
    return atomic_write_bytes(path, encode_params(params))


def load_params(path: str | Path) -> ModelParams:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode_params(data)
