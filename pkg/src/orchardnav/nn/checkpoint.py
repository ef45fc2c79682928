"""Binary checkpoint format for parameter dicts.

Layout: magic b"RRNN", format version u32, then per-tensor records of
(name length u32, utf-8 name, rank u32, dims u32..., float32 data), all
little-endian. Tensors are written in sorted name order so identical
parameter sets produce byte-identical files.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"RRNN"
FORMAT_VERSION = 1


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        for name in sorted(tensors):
            # note: ascontiguousarray would promote rank-0 tensors to rank 1
            arr = np.asarray(tensors[name], dtype="<f4", order="C")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    offset = 8
    tensors: dict[str, np.ndarray] = {}
    while offset < len(data):
        (name_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        name = data[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", data, offset)
        offset += 4
        dims = struct.unpack_from(f"<{rank}I", data, offset)
        offset += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(dims)
        offset += 4 * count
        tensors[name] = arr.copy()
    return tensors
