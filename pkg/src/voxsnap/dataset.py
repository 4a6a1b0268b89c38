"""Desk-scale training corpus: procedural chairs/tables/airplanes plus a
loader for pre-voxelized VXGB corpora.

Shapes are compositions of axis-aligned boxes parameterized by fractions of
the grid extent, constructed to be connected, mirror-symmetric about X, and
deterministic per spec.  Chair and table boxes are mutually disjoint so
occupancy counts follow from closed-form box volumes (airplane parts are
allowed to overlap).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from voxsnap.ioutil import atomic_write_text
from voxsnap.voxel import VoxelGrid, load_grid, save_grid

CATEGORIES = ("chair", "table", "airplane")

# (low, high) fractional ranges per continuous parameter; flags list their
# bernoulli probability under sample_spec
PARAM_RANGES = {
    "chair": {
        "seat_height": (0.30, 0.50),
        "seat_width": (0.45, 0.85),
        "seat_depth": (0.45, 0.85),
        "seat_thickness": (0.07, 0.14),
        "back_height": (0.20, 0.36),
        "back_thickness": (0.05, 0.13),
        "leg_thickness": (0.05, 0.15),
        "arm_height": (0.10, 0.22),
        "arm_thickness": (0.05, 0.12),
        "base_height": (0.05, 0.12),
        "base_width": (0.28, 0.45),
        "column_width": (0.10, 0.20),
    },
    "table": {
        "top_height": (0.35, 0.60),
        "top_width": (0.55, 0.90),
        "top_depth": (0.55, 0.90),
        "top_thickness": (0.06, 0.14),
        "leg_thickness": (0.05, 0.13),
    },
    "airplane": {
        "fuselage_length": (0.70, 0.95),
        "fuselage_width": (0.10, 0.22),
        "fuselage_height": (0.10, 0.22),
        "wing_span": (0.60, 0.95),
        "wing_chord": (0.15, 0.30),
        "wing_thickness": (0.05, 0.10),
        "tail_height": (0.10, 0.20),
        "tail_depth": (0.08, 0.16),
        "stabilizer_span": (0.25, 0.45),
    },
}

FLAG_PROBS = {
    "chair": {"armrests": 0.5, "swivel": 0.3},
    "table": {},
    "airplane": {},
}


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class ShapeSpec:
    """Category plus fractional parameters (flags stored as 0.0/1.0)."""

    category: str
    params: dict

    def validate(self) -> None:
        if self.category not in CATEGORIES:
            raise SpecError(f"unknown category {self.category!r}")
        ranges = PARAM_RANGES[self.category]
        flags = FLAG_PROBS[self.category]
        for name, value in self.params.items():
            if name in flags:
                if value not in (0.0, 1.0):
                    raise SpecError(f"{name} must be 0 or 1, got {value}")
            elif name in ranges:
                lo, hi = ranges[name]
                if not lo <= value <= hi:
                    raise SpecError(f"{name}={value} outside [{lo}, {hi}]")
            else:
                raise SpecError(f"unknown parameter {name!r} for {self.category}")
        missing = (set(ranges) | set(flags)) - set(self.params)
        if missing:
            raise SpecError(f"missing parameters: {sorted(missing)}")


def _floor(fraction: float, dims: int, minimum: int = 1) -> int:
    return max(minimum, int(fraction * dims))


def _even(fraction: float, dims: int) -> int:
    """Nearest even extent, so centered boxes stay X-mirror-symmetric."""
    return max(2, 2 * round(fraction * dims / 2.0))


def _centered(extent: int, dims: int) -> tuple:
    lo = (dims - extent) // 2
    return lo, lo + extent


def _chair_boxes(p: dict, n: int) -> list:
    boxes = []
    sw, sd = _even(p["seat_width"], n), _floor(p["seat_depth"], n)
    st, z0 = _floor(p["seat_thickness"], n), _floor(p["seat_height"], n)
    x0, x1 = _centered(sw, n)
    y0, y1 = _centered(sd, n)
    boxes.append((z0, z0 + st, y0, y1, x0, x1))  # seat slab

    if p["swivel"]:
        bh = _floor(p["base_height"], n)
        bw = _even(p["base_width"], n)
        cw = _even(p["column_width"], n)
        bx0, bx1 = _centered(bw, n)
        by0, by1 = _centered(min(bw, sd), n)
        cx0, cx1 = _centered(cw, n)
        cy0, cy1 = _centered(min(cw, sd), n)
        boxes.append((0, bh, by0, by1, bx0, bx1))  # base slab
        boxes.append((bh, z0, cy0, cy1, cx0, cx1))  # column
    else:
        lt = _floor(p["leg_thickness"], n)
        for lx0, lx1 in ((x0, x0 + lt), (x1 - lt, x1)):
            for ly0, ly1 in ((y0, y0 + lt), (y1 - lt, y1)):
                boxes.append((0, z0, ly0, ly1, lx0, lx1))

    bt = _floor(p["back_thickness"], n)
    bh = _floor(p["back_height"], n)
    top = z0 + st
    boxes.append((top, top + bh, y1 - bt, y1, x0, x1))  # back slab

    if p["armrests"]:
        at = _floor(p["arm_thickness"], n)
        ah = _floor(p["arm_height"], n)
        for ax0, ax1 in ((x0, x0 + at), (x1 - at, x1)):
            boxes.append((top, top + ah, y0, y1 - bt, ax0, ax1))
    return boxes


def _table_boxes(p: dict, n: int) -> list:
    tw, td = _even(p["top_width"], n), _floor(p["top_depth"], n)
    tt, z0 = _floor(p["top_thickness"], n), _floor(p["top_height"], n)
    x0, x1 = _centered(tw, n)
    y0, y1 = _centered(td, n)
    boxes = [(z0, z0 + tt, y0, y1, x0, x1)]
    lt = _floor(p["leg_thickness"], n)
    for lx0, lx1 in ((x0, x0 + lt), (x1 - lt, x1)):
        for ly0, ly1 in ((y0, y0 + lt), (y1 - lt, y1)):
            boxes.append((0, z0, ly0, ly1, lx0, lx1))
    return boxes


def _airplane_boxes(p: dict, n: int) -> list:
    fl = _floor(p["fuselage_length"], n)
    fw = _even(p["fuselage_width"], n)
    fh = _floor(p["fuselage_height"], n)
    fx0, fx1 = _centered(fw, n)
    fy0, fy1 = _centered(fl, n)
    fz0 = max(0, n // 2 - fh)
    boxes = [(fz0, fz0 + fh, fy0, fy1, fx0, fx1)]

    ws = _even(p["wing_span"], n)
    wc = _floor(p["wing_chord"], n)
    wt = _floor(p["wing_thickness"], n)
    wx0, wx1 = _centered(ws, n)
    wy0 = fy0 + max(1, fl // 4)
    wz0 = fz0 + max(0, (fh - wt) // 2)
    boxes.append((wz0, wz0 + wt, wy0, min(wy0 + wc, fy1), wx0, wx1))

    th = _floor(p["tail_height"], n)
    td = _floor(p["tail_depth"], n)
    tail_w = max(2, (fw // 2) & ~1)  # even so the centered fin stays symmetric
    tx0, tx1 = _centered(tail_w, n)
    boxes.append((fz0 + fh, fz0 + fh + th, fy1 - td, fy1, tx0, tx1))

    ss = _even(p["stabilizer_span"], n)
    sx0, sx1 = _centered(ss, n)
    boxes.append((fz0 + fh - wt, fz0 + fh, fy1 - td, fy1, sx0, sx1))
    return boxes


_BUILDERS = {"chair": _chair_boxes, "table": _table_boxes, "airplane": _airplane_boxes}


def gen_procedural_shape(spec: ShapeSpec, dims: int) -> VoxelGrid:
    """Deterministic box composition for the spec; connected and
    X-mirror-symmetric by construction."""
    if dims not in (8, 16, 32, 64):
        raise ValueError(f"dims must be one of 8/16/32/64, got {dims}")
    spec.validate()
    occ = np.zeros((dims, dims, dims), dtype=bool)
    for z0, z1, y0, y1, x0, x1 in _BUILDERS[spec.category](spec.params, dims):
        if not (0 <= z0 < z1 <= dims and 0 <= y0 < y1 <= dims and 0 <= x0 < x1 <= dims):
            raise SpecError(
                f"box ({z0},{z1},{y0},{y1},{x0},{x1}) does not fit a {dims}^3 grid"
            )
        occ[z0:z1, y0:y1, x0:x1] = True
    return VoxelGrid(occ)


def sample_spec(category: str, rng: np.random.Generator) -> ShapeSpec:
    """Uniform draw from the declared ranges (re-drawn when the vertical
    extents cannot stack inside the grid)."""
    ranges = PARAM_RANGES[category]
    flags = FLAG_PROBS[category]
    for _ in range(1000):
        params = {name: float(rng.uniform(lo, hi)) for name, (lo, hi) in ranges.items()}
        for name, prob in flags.items():
            params[name] = float(rng.random() < prob)
        spec = ShapeSpec(category, params)
        if _stacks_vertically(spec):
            return spec
    raise RuntimeError("rejection sampling failed; parameter ranges too tight")


def _stacks_vertically(spec: ShapeSpec) -> bool:
    p = spec.params
    if spec.category == "chair":
        top = p["seat_height"] + p["seat_thickness"]
        return top + max(p["back_height"], p["arm_height"] if p["armrests"] else 0.0) <= 0.95
    if spec.category == "table":
        return p["top_height"] + p["top_thickness"] <= 0.95
    return True


@dataclass(frozen=True)
class DatasetItem:
    grid: VoxelGrid
    category: str
    split: str  # train | heldout
    provenance: str


@dataclass
class Dataset:
    dims: int
    items: list = field(default_factory=list)

    def split(self, name: str) -> list:
        return [item for item in self.items if item.split == name]

    def grids(self, split: str) -> list:
        return [item.grid for item in self.items if item.split == split]

    def __len__(self) -> int:
        return len(self.items)


def build_dataset(
    category: str, n_train: int, n_heldout: int, dims: int, seed: int
) -> Dataset:
    """n_train + n_heldout procedurally generated shapes from per-shape
    child seeds.  Held-out grids are re-sampled on bit-identical collision
    with any training grid, so the splits stay disjoint as shape sets."""
    if n_train < 1 or n_heldout < 1:
        raise ValueError("counts must be >= 1")
    root = np.random.SeedSequence(seed)
    ds = Dataset(dims=dims)
    train_keys = set()

    def children():
        while True:
            yield root.spawn(1)[0]

    children = children()

    for i in range(n_train):
        child = next(children)
        grid = gen_procedural_shape(sample_spec(category, np.random.default_rng(child)), dims)
        train_keys.add(grid.occupancy.tobytes())
        ds.items.append(DatasetItem(grid, category, "train", f"procedural:{category}:{seed}:{i}"))

    for i in range(n_heldout):
        for _ in range(200):
            child = next(children)
            grid = gen_procedural_shape(
                sample_spec(category, np.random.default_rng(child)), dims
            )
            if grid.occupancy.tobytes() not in train_keys:
                break
        else:
            raise RuntimeError("could not sample a held-out shape distinct from training set")
        ds.items.append(
            DatasetItem(grid, category, "heldout", f"procedural:{category}:{seed}:h{i}")
        )
    return ds


def batches(
    ds: Dataset,
    split: str,
    batch_size: int,
    shuffle: bool = True,
    rng: Optional[np.random.Generator] = None,
) -> Iterator[np.ndarray]:
    """One epoch of (N,1,D,D,D) float64 {0,1} arrays; the trailing short
    batch is dropped."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    grids = ds.grids(split)
    if not grids:
        raise ValueError(f"empty split {split!r}")
    order = np.arange(len(grids))
    if shuffle:
        if rng is None:
            raise ValueError("shuffle requires an rng")
        order = rng.permutation(len(grids))
    for start in range(0, len(grids) - batch_size + 1, batch_size):
        idx = order[start : start + batch_size]
        batch = np.stack([grids[i].occupancy for i in idx]).astype(np.float64)
        yield batch[:, np.newaxis]


def save_dataset(ds: Dataset, out_dir) -> None:
    """VXGB file per grid plus a tab-separated manifest (path, category, split)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, item in enumerate(ds.items):
        name = f"{item.category}_{item.split}_{i:05d}.vxgb"
        save_grid(out_dir / name, item.grid)
        lines.append(f"{name}\t{item.category}\t{item.split}")
    atomic_write_text(out_dir / "manifest.tsv", "\n".join(lines) + "\n")


def load_manifest(manifest_path) -> Dataset:
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    items = []
    dims = None
    for lineno, line in enumerate(manifest_path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rel, category, split = line.split("\t")
        except ValueError:
            raise ValueError(f"{manifest_path}:{lineno}: expected path<TAB>category<TAB>split")
        grid = load_grid(base / rel)
        if dims is None:
            dims = grid.dims
        elif grid.dims != dims:
            raise ValueError(f"{rel}: resolution {grid.dims} != dataset resolution {dims}")
        items.append(DatasetItem(grid, category, split, str(base / rel)))
    if dims is None:
        raise ValueError(f"{manifest_path}: empty manifest")
    return Dataset(dims=dims, items=items)
