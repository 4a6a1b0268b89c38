"""Model persistence: VXSN net checkpoints plus the bundle.json sidecar.

A model bundle directory holds:

    gen.vxsn    generator parameters/buffers (+ Adam state)
    disc.vxsn   discriminator parameters/buffers (+ Adam state)
    proj.vxsn   projection network, written by projection training
    bundle.json {category?, resolution, latent_dim, base_channels, epoch,
                 gan_config/proj_config, rng_state, snap_defaults?}
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from voxsnap.ioutil import atomic_write_text
from voxsnap.models.nets import (
    DiscriminatorNet,
    GeneratorNet,
    ProjectionNet,
    load_state_arrays,
    state_arrays,
)
from voxsnap.tensor import AdamState
from voxsnap.tensor.checkpoint import load_tensors, save_tensors

BUNDLE_META = "bundle.json"


def save_net(path, net, adam: AdamState | None = None) -> None:
    state = dict(state_arrays(net))
    if adam is not None:
        for (name, _), m, v in zip(net.params().items(), adam.m, adam.v):
            state[f"{name}.m"] = m
            state[f"{name}.v"] = v
        state["adam.t"] = np.array(float(adam.t))
    save_tensors(path, state)


def load_net(path, net, adam: AdamState | None = None) -> None:
    """Restore parameters/buffers (and optionally Adam moments) in place."""
    state = load_tensors(path)
    load_state_arrays(net, state)
    if adam is not None:
        adam.t = int(state.get("adam.t", 0.0).reshape(()))
        for i, (name, p) in enumerate(net.params().items()):
            for attr, store in (("m", adam.m), ("v", adam.v)):
                key = f"{name}.{attr}"
                if key in state:
                    arr = state[key]
                    if arr.shape != p.data.shape:
                        raise ValueError(f"{key}: shape {arr.shape} != {p.data.shape}")
                    store[i] = arr


def update_bundle_meta(bundle_dir, **fields) -> dict:
    bundle_dir = Path(bundle_dir)
    meta = read_bundle_meta(bundle_dir) if (bundle_dir / BUNDLE_META).exists() else {}
    meta.update(fields)
    atomic_write_text(bundle_dir / BUNDLE_META, json.dumps(meta, indent=2, default=str) + "\n")
    return meta


def read_bundle_meta(bundle_dir) -> dict:
    return json.loads((Path(bundle_dir) / BUNDLE_META).read_text())


def load_gan(bundle_dir) -> tuple:
    """(generator, discriminator, meta) from a bundle directory."""
    bundle_dir = Path(bundle_dir)
    meta = read_bundle_meta(bundle_dir)
    rng = np.random.default_rng(0)  # overwritten immediately
    gen = GeneratorNet(meta["latent_dim"], meta["resolution"], meta["base_channels"], rng=rng)
    disc = DiscriminatorNet(meta["resolution"], meta["base_channels"], rng=rng)
    load_net(bundle_dir / "gen.vxsn", gen)
    load_net(bundle_dir / "disc.vxsn", disc)
    return gen, disc, meta


def load_projection(bundle_dir) -> ProjectionNet:
    bundle_dir = Path(bundle_dir)
    meta = read_bundle_meta(bundle_dir)
    proj = ProjectionNet(
        meta["latent_dim"],
        meta["resolution"],
        meta["base_channels"],
        rng=np.random.default_rng(0),
    )
    load_net(bundle_dir / "proj.vxsn", proj)
    return proj
