"""Binary voxel grids: representation, VXGB serialization, binarization,
perturbation, and output postprocessing (component removal, reflection).

Grids are cubic boolean arrays indexed ``[z, y, x]`` (axis 0 = Z/up,
axis 1 = Y/depth, axis 2 = X/width; X varies fastest in serialized order).
All operations are pure functions on immutable inputs.
"""

from __future__ import annotations

import base64
import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from voxsnap.ioutil import atomic_write_bytes

VXGB_MAGIC = b"VXGB"
VXGB_VERSION = 1

_AXIS_INDEX = {"X": 2, "Y": 1, "Z": 0}
_CONN_ORDER = {6: 1, 18: 2, 26: 3}


class VoxelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class VoxelGrid:
    """Cubic binary occupancy grid."""

    occupancy: np.ndarray

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=bool)
        if occ.ndim != 3 or len(set(occ.shape)) != 1:
            raise ValueError(f"voxel grid must be cubic, got shape {occ.shape}")
        object.__setattr__(self, "occupancy", occ)

    @property
    def dims(self) -> int:
        return self.occupancy.shape[0]

    @property
    def count(self) -> int:
        return int(self.occupancy.sum())

    def __eq__(self, other):
        return isinstance(other, VoxelGrid) and np.array_equal(self.occupancy, other.occupancy)

    def __hash__(self):
        return hash((self.dims, self.occupancy.tobytes()))

    @classmethod
    def empty(cls, dims: int) -> "VoxelGrid":
        return cls(np.zeros((dims, dims, dims), dtype=bool))


@dataclass(frozen=True)
class ContinuousGrid:
    """Real-valued occupancy in [0, 1], the generator's raw output."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 3:
            raise ValueError(f"continuous grid must be rank 3, got {vals.shape}")
        if vals.size and (vals.min() < 0.0 or vals.max() > 1.0):
            raise ValueError("continuous grid values must lie in [0, 1]")
        object.__setattr__(self, "values", vals)

    @property
    def dims(self) -> int:
        return self.values.shape[0]


def binarize(grid: ContinuousGrid, threshold: float = 0.5) -> VoxelGrid:
    """Occupied iff value >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    return VoxelGrid(grid.values >= threshold)


def remove_small_components(
    grid: VoxelGrid, min_fraction: float = 0.1, connectivity: int = 26
) -> VoxelGrid:
    """Delete connected components smaller than min_fraction times the
    largest one. The largest component always survives; ties at the
    threshold are kept."""
    if not 0.0 <= min_fraction <= 1.0:
        raise ValueError(f"min_fraction must be in [0, 1], got {min_fraction}")
    if connectivity not in _CONN_ORDER:
        raise ValueError(f"connectivity must be one of 6/18/26, got {connectivity}")
    structure = ndimage.generate_binary_structure(3, _CONN_ORDER[connectivity])
    labels, n = ndimage.label(grid.occupancy, structure=structure)
    if n <= 1:
        return grid
    sizes = np.bincount(labels.ravel())[1:]  # skip background
    cutoff = min_fraction * sizes.max()
    keep = np.flatnonzero(sizes >= cutoff) + 1
    return VoxelGrid(np.isin(labels, keep))


def symmetrize(grid: VoxelGrid, axis: str = "X", keep: str = "low") -> VoxelGrid:
    """Mirror one half of the grid across the axis midplane."""
    if axis not in _AXIS_INDEX:
        raise ValueError(f"axis must be X, Y or Z, got {axis!r}")
    if keep not in ("low", "high"):
        raise ValueError(f"keep must be 'low' or 'high', got {keep!r}")
    n = grid.dims
    if n % 2 != 0:
        raise ValueError(f"symmetrize needs an even extent, got {n}")
    occ = grid.occupancy.copy()
    view = np.moveaxis(occ, _AXIS_INDEX[axis], 0)
    half = n // 2
    if keep == "low":
        view[half:] = view[:half][::-1]
    else:
        view[:half] = view[half:][::-1]
    return VoxelGrid(occ)


def drop_voxels(grid: VoxelGrid, fraction: float, rng: np.random.Generator) -> VoxelGrid:
    """Clear exactly floor(fraction * occupied) cells, uniformly chosen."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    occupied = np.flatnonzero(grid.occupancy.ravel())
    n_drop = int(fraction * occupied.size)
    if n_drop == 0:
        return grid
    doomed = rng.choice(occupied, size=n_drop, replace=False)
    flat = grid.occupancy.copy().ravel()
    flat[doomed] = False
    return VoxelGrid(flat.reshape(grid.occupancy.shape))


def encode(grid: VoxelGrid) -> bytes:
    """VXGB: magic, version u32, dims u32 x3, bit-packed occupancy.

    Cells are flattened X-fastest (C order of [z,y,x]); bit k of payload
    byte j is cell 8*j + k."""
    d = grid.dims
    header = VXGB_MAGIC + struct.pack("<IIII", VXGB_VERSION, d, d, d)
    payload = np.packbits(grid.occupancy.ravel(), bitorder="little").tobytes()
    return header + payload


def decode(data: bytes) -> VoxelGrid:
    if len(data) < 20:
        raise VoxelFormatError("truncated header")
    if data[:4] != VXGB_MAGIC:
        raise VoxelFormatError(f"bad magic {data[:4]!r}")
    version, d, h, w = struct.unpack_from("<IIII", data, 4)
    if version != VXGB_VERSION:
        raise VoxelFormatError(f"unsupported version {version}")
    if not (d == h == w) or d == 0:
        raise VoxelFormatError(f"non-cubic dims ({d}, {h}, {w})")
    n_cells = d * h * w
    n_bytes = (n_cells + 7) // 8
    payload = data[20 : 20 + n_bytes]
    if len(payload) < n_bytes:
        raise VoxelFormatError("truncated payload")
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), bitorder="little")
    return VoxelGrid(bits[:n_cells].astype(bool).reshape(d, h, w))


def save_grid(path, grid: VoxelGrid) -> None:
    atomic_write_bytes(path, encode(grid))


def load_grid(path) -> VoxelGrid:
    with open(path, "rb") as f:
        return decode(f.read())


def grid_to_json(grid: VoxelGrid) -> str:
    """Service wire form: base64 of the full VXGB payload."""
    return base64.b64encode(encode(grid)).decode("ascii")


def grid_from_json(value) -> VoxelGrid:
    """Accept either the base64 VXGB string or a nested [D][H][W] 0/1 array."""
    if isinstance(value, str):
        try:
            raw = base64.b64decode(value, validate=True)
        except Exception as exc:
            raise VoxelFormatError(f"invalid base64 grid payload: {exc}") from exc
        return decode(raw)
    if isinstance(value, list):
        arr = np.asarray(value)
        if arr.ndim != 3:
            raise VoxelFormatError(f"nested grid must be rank 3, got rank {arr.ndim}")
        if not np.isin(arr, (0, 1)).all():
            raise VoxelFormatError("nested grid entries must be 0 or 1")
        return VoxelGrid(arr.astype(bool))
    raise VoxelFormatError(f"grid must be a base64 string or nested list, got {type(value).__name__}")
