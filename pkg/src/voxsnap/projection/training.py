"""Projection network training.

Minimizes the mean conv15 dissimilarity between each training shape and
the reconstruction generated from its projected latent, with the generator
and discriminator strictly frozen: the loop asserts their parameters and
buffers are bit-identical before and after.

The projector's *input* is perturbed by dropping half the occupied voxels
afresh every epoch while the dissimilarity target stays the intact shape,
so partial user input learns to project to the complete object (the
projected reconstructions of heavily damaged inputs should come out whole,
which is also what the held-out evaluations measure).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from voxsnap.dataset import Dataset
from voxsnap.models import io as model_io
from voxsnap.models.gan import frozen
from voxsnap.models.nets import (
    DiscriminatorNet,
    GeneratorNet,
    ProjectionNet,
    state_arrays,
)
from voxsnap.tensor import AdamState, NumericsError, Tape, Tensor, adam_step, backward
from voxsnap.tensor import ops
from voxsnap.voxel import drop_voxels


@dataclass
class ProjTrainConfig:
    epochs: int
    batch_size: int = 50
    lr: float = 0.0005
    beta1: float = 0.5
    drop_fraction: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.drop_fraction <= 1.0:
            raise ValueError("drop_fraction must be in [0, 1]")


@dataclass
class ProjStepRecord:
    step: int
    epoch: int
    loss: float
    timestamp: float


@dataclass
class ProjTrainLog:
    records: list = field(default_factory=list)

    def append(self, rec: ProjStepRecord) -> None:
        self.records.append(rec)

    def epoch_mean_loss(self, epoch: int) -> float:
        losses = [r.loss for r in self.records if r.epoch == epoch]
        return float(np.mean(losses)) if losses else float("nan")

    def to_csv(self, path) -> None:
        from voxsnap.ioutil import atomic_write_text

        lines = ["step,epoch,loss,timestamp"]
        for r in self.records:
            lines.append(f"{r.step},{r.epoch},{r.loss:.8g},{r.timestamp:.3f}")
        atomic_write_text(path, "\n".join(lines) + "\n")


def _clean_features(grids, disc, chunk: int = 64) -> np.ndarray:
    batched = np.stack([g.occupancy.astype(np.float64) for g in grids])[:, np.newaxis]
    feats = []
    for start in range(0, len(grids), chunk):
        _, f = disc.forward(Tensor(batched[start : start + chunk]), train=False)
        feats.append(f.data)
    return np.concatenate(feats)


def _snapshot(net) -> dict:
    return {name: arr.copy() for name, arr in state_arrays(net).items()}


def _assert_unchanged(net, before: dict, label: str) -> None:
    after = state_arrays(net)
    for name, arr in before.items():
        if not np.array_equal(arr, after[name]):
            raise RuntimeError(f"{label} was modified during projection training ({name})")


def train_projection(
    ds: Dataset,
    gen: GeneratorNet,
    disc: DiscriminatorNet,
    cfg: ProjTrainConfig,
    checkpoint_dir=None,
    on_step=None,
) -> tuple:
    """Returns (projection_net, log). Only the projection parameters move."""
    cfg.validate()
    train_grids = ds.grids("train")
    if not train_grids:
        raise ValueError("dataset has no training split")
    if gen.resolution != ds.dims or disc.resolution != ds.dims:
        raise ValueError("model resolution does not match dataset resolution")

    gen_before, disc_before = _snapshot(gen), _snapshot(disc)

    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    rng_init, rng_aug, rng_shuffle = map(np.random.default_rng, seeds)
    proj = ProjectionNet(gen.latent_dim, ds.dims, disc.base_channels, rng=rng_init)
    proj_params = list(proj.params().values())
    adam = AdamState.for_params(proj_params, lr=cfg.lr, beta1=cfg.beta1)

    # dissimilarity targets are the intact shapes: their descriptors are
    # constants, computed once up front
    target_feats = _clean_features(train_grids, disc)

    log = ProjTrainLog()
    step = 0
    for epoch in range(cfg.epochs):
        # fresh voxel-dropout per epoch, applied to the projector input only
        augmented = [
            drop_voxels(g, cfg.drop_fraction, rng_aug).occupancy.astype(np.float64)
            for g in train_grids
        ]
        order = rng_shuffle.permutation(len(augmented))
        for start in range(0, len(augmented) - cfg.batch_size + 1, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x = Tensor(np.stack([augmented[i] for i in idx])[:, np.newaxis])

            tape = Tape()
            z = proj.forward(x, train=True, tape=tape)
            with frozen(gen, disc):
                out = gen.forward(z, train=False, tape=tape)
                _, feats_out = disc.forward(out, train=False, tape=tape)
            feats_in = Tensor(target_feats[idx])

            diff = ops.sub(feats_out, feats_in, tape)
            sq = ops.mul(diff, diff, tape)
            per_sample = ops.sum_over(sq, (1, 2, 3, 4), tape)
            loss = ops.mean_all(ops.sqrt(per_sample, tape), tape)
            backward(tape, loss, params=proj_params)
            adam_step(proj_params, None, adam)

            loss_val = loss.item()
            if not np.isfinite(loss_val):
                raise NumericsError(f"non-finite projection loss at step {step}")
            rec = ProjStepRecord(step=step, epoch=epoch, loss=loss_val, timestamp=time.time())
            log.append(rec)
            if on_step is not None:
                on_step(rec)
            step += 1

        if checkpoint_dir is not None:
            checkpoint_dir = Path(checkpoint_dir)
            model_io.save_net(checkpoint_dir / "proj.vxsn", proj, adam)
            model_io.update_bundle_meta(
                checkpoint_dir,
                proj_epoch=epoch + 1,
                proj_config=cfg.__dict__,
            )

    _assert_unchanged(gen, gen_before, "generator")
    _assert_unchanged(disc, disc_before, "discriminator")
    return proj, log
