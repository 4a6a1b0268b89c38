"""VXSN parameter checkpoint format.

Binary layout, all integers little-endian:

    magic "VXSN" | version u32 | entries until EOF

    entry: name_len u32 | name (UTF-8) | rank u32 | extents u32[rank]
           | values float64[prod(extents)]

Rank-0 entries carry exactly one value and are used for scalars such as the
Adam step counter (saved as ``adam.t``); optimizer moments are saved under
``<param>.m`` / ``<param>.v`` next to their parameter.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from voxsnap.ioutil import atomic_write_bytes

MAGIC = b"VXSN"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype=np.float64)
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<I", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<I", arr.ndim))
        for extent in arr.shape:
            buf.write(struct.pack("<I", extent))
        buf.write(np.ascontiguousarray(arr).astype("<f8").tobytes())
    atomic_write_bytes(path, buf.getvalue())


def load_tensors(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"bad magic in {path}: {raw[:4]!r}")
    if len(raw) < 8:
        raise CheckpointError(f"truncated header in {path}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")

    tensors: dict[str, np.ndarray] = {}
    pos = 8
    view = memoryview(raw)
    while pos < len(raw):
        pos, name_len = _read_u32(view, pos, path)
        if pos + name_len > len(raw):
            raise CheckpointError(f"truncated name in {path}")
        name = bytes(view[pos : pos + name_len]).decode("utf-8")
        pos += name_len
        pos, rank = _read_u32(view, pos, path)
        extents = []
        for _ in range(rank):
            pos, extent = _read_u32(view, pos, path)
            extents.append(extent)
        count = int(np.prod(extents, dtype=np.int64)) if extents else 1
        nbytes = count * 8
        if pos + nbytes > len(raw):
            raise CheckpointError(f"truncated values for {name!r} in {path}")
        values = np.frombuffer(view[pos : pos + nbytes], dtype="<f8").astype(np.float64)
        pos += nbytes
        tensors[name] = values.reshape(extents)
    return tensors


def _read_u32(view: memoryview, pos: int, path) -> tuple[int, int]:
    if pos + 4 > len(view):
        raise CheckpointError(f"truncated payload in {path}")
    (value,) = struct.unpack_from("<I", view, pos)
    return pos + 4, value
