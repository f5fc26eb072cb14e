"""Binary tensor container used by the CLI for signals and noise dumps.

Layout (little-endian): magic "PRDS", version byte, dtype tag byte
(1 = float64), rank byte, rank u32 dims, then the row-major float64
payload.  Trivially parseable from any language.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ConfigurationError

TENSOR_MAGIC = b"PRDS"
TENSOR_VERSION = 1
DTYPE_F64 = 1
_MAX_RANK = 8


def write_tensor(path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype="<f8")
    if array.ndim < 1 or array.ndim > _MAX_RANK:
        raise ConfigurationError(f"tensor rank must be 1..{_MAX_RANK}, got {array.ndim}")
    header = TENSOR_MAGIC + struct.pack("<BBB", TENSOR_VERSION, DTYPE_F64, array.ndim)
    dims = struct.pack(f"<{array.ndim}I", *array.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(dims)
        fh.write(array.tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 7 or data[:4] != TENSOR_MAGIC:
        raise ConfigurationError(f"{path}: not a tensor container (bad magic)")
    version, dtype_tag, rank = struct.unpack("<BBB", data[4:7])
    if version != TENSOR_VERSION:
        raise ConfigurationError(f"{path}: unsupported container version {version}")
    if dtype_tag != DTYPE_F64:
        raise ConfigurationError(f"{path}: unsupported dtype tag {dtype_tag}")
    if not 1 <= rank <= _MAX_RANK:
        raise ConfigurationError(f"{path}: bad rank {rank}")
    dims_end = 7 + 4 * rank
    dims = struct.unpack(f"<{rank}I", data[7:dims_end])
    count = int(np.prod(dims))
    payload = data[dims_end:]
    if len(payload) != 8 * count:
        raise ConfigurationError(
            f"{path}: payload holds {len(payload)} bytes, dims {dims} need {8 * count}")
    return np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
