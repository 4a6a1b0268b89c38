"""Adversarial training loop and the latent-space sampling/interpolation
evaluation helpers.

Training follows the modified minimax recipe: the discriminator minimizes
-[log D(x_real) + log(1 - D(G(z)))] while the generator maximizes
log D(G(z)) (implemented as minimizing -log D(G(z))), with latents drawn
from N(0, I_d) for every update and 50% volumetric dropout active in the
discriminator.  One stabilizer on top: the discriminator update is skipped
whenever its real-vs-fake accuracy on the current batch already exceeds
``disc_skip_acc`` (skips are flagged in the log).
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from voxsnap.dataset import Dataset, batches
from voxsnap.models import io as model_io
from voxsnap.models.nets import DiscriminatorNet, GeneratorNet
from voxsnap.tensor import AdamState, NumericsError, Tape, Tensor, adam_step, backward
from voxsnap.tensor import ops
from voxsnap.voxel import ContinuousGrid


@dataclass
class GanTrainConfig:
    epochs: int
    batch_size: int = 100
    latent_dim: int = 200
    lr_g: float = 0.0025
    lr_d: float = 1e-5
    beta1: float = 0.5
    dropout_p: float = 0.5
    base_channels: int = 32
    seed: int = 0
    disc_skip_acc: float = 0.95

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch norm needs a batch)")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ValueError("learning rates must be positive")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")


@dataclass
class StepRecord:
    step: int
    epoch: int
    g_loss: float
    d_loss: float
    acc_real: float
    acc_fake: float
    d_skipped: bool
    timestamp: float

    @property
    def accuracy(self) -> float:
        return 0.5 * (self.acc_real + self.acc_fake)


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def append(self, record: StepRecord) -> None:
        if self.records and record.step <= self.records[-1].step:
            raise ValueError("step indices must be strictly increasing")
        self.records.append(record)

    def epoch(self, epoch: int) -> list:
        return [r for r in self.records if r.epoch == epoch]

    def to_csv(self, path) -> None:
        from voxsnap.ioutil import atomic_write_text

        lines = ["step,epoch,g_loss,d_loss,acc_real,acc_fake,d_skipped,timestamp"]
        for r in self.records:
            lines.append(
                f"{r.step},{r.epoch},{r.g_loss:.8g},{r.d_loss:.8g},"
                f"{r.acc_real:.6g},{r.acc_fake:.6g},{int(r.d_skipped)},{r.timestamp:.3f}"
            )
        atomic_write_text(path, "\n".join(lines) + "\n")


@contextmanager
def frozen(*nets):
    """Temporarily clear requires_grad so backward skips these parameters."""
    params = [p for net in nets for p in net.params().values()]
    saved = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, s in zip(params, saved):
            p.requires_grad = s


def _neg_mean_log(scores: Tensor, tape: Tape) -> Tensor:
    return ops.scale_shift(ops.mean_all(ops.log_eps(scores, tape=tape), tape), -1.0, tape=tape)


def _neg_mean_log_complement(scores: Tensor, tape: Tape) -> Tensor:
    flipped = ops.scale_shift(scores, -1.0, 1.0, tape)
    return ops.scale_shift(ops.mean_all(ops.log_eps(flipped, tape=tape), tape), -1.0, tape=tape)


def train_gan(
    ds: Dataset,
    cfg: GanTrainConfig,
    checkpoint_dir=None,
    on_step=None,
) -> tuple:
    """Train generator and discriminator on the dataset's train split.

    Returns (generator, discriminator, log).  With ``checkpoint_dir`` set,
    gen.vxsn / disc.vxsn (with Adam state) are rewritten after every epoch.
    Fixed seeds give bit-identical trajectories.
    """
    cfg.validate()
    if not ds.grids("train"):
        raise ValueError("dataset has no training split")

    seeds = np.random.SeedSequence(cfg.seed).spawn(5)
    rng_g_init, rng_d_init, rng_noise, rng_shuffle, rng_dropout = map(
        np.random.default_rng, seeds
    )

    gen = GeneratorNet(cfg.latent_dim, ds.dims, cfg.base_channels, rng=rng_g_init)
    disc = DiscriminatorNet(ds.dims, cfg.base_channels, cfg.dropout_p, rng=rng_d_init)
    gen_params = list(gen.params().values())
    disc_params = list(disc.params().values())
    adam_g = AdamState.for_params(gen_params, lr=cfg.lr_g, beta1=cfg.beta1)
    adam_d = AdamState.for_params(disc_params, lr=cfg.lr_d, beta1=cfg.beta1)

    log = TrainLog()
    step = 0
    for epoch in range(cfg.epochs):
        for batch in batches(ds, "train", cfg.batch_size, shuffle=True, rng=rng_shuffle):
            n = batch.shape[0]
            x_real = Tensor(batch)

            # discriminator step (maybe skipped by the accuracy throttle)
            z = Tensor(rng_noise.standard_normal((n, cfg.latent_dim)))
            with frozen(gen):
                fake = gen.forward(z, train=True)
            tape_d = Tape()
            s_real, _ = disc.forward(x_real, train=True, rng=rng_dropout, tape=tape_d)
            s_fake, _ = disc.forward(fake, train=True, rng=rng_dropout, tape=tape_d)
            d_loss = ops.add(
                _neg_mean_log(s_real, tape_d),
                _neg_mean_log_complement(s_fake, tape_d),
                tape_d,
            )
            acc_real = float(np.mean(s_real.data > 0.5))
            acc_fake = float(np.mean(s_fake.data <= 0.5))
            skip_d = 0.5 * (acc_real + acc_fake) > cfg.disc_skip_acc
            if not skip_d:
                backward(tape_d, d_loss, params=disc_params)
                adam_step(disc_params, None, adam_d)

            # generator step against the (possibly updated) discriminator
            z2 = Tensor(rng_noise.standard_normal((n, cfg.latent_dim)))
            tape_g = Tape()
            fake2 = gen.forward(z2, train=True, tape=tape_g)
            with frozen(disc):
                s_fake2, _ = disc.forward(fake2, train=True, rng=rng_dropout, tape=tape_g)
            g_loss = _neg_mean_log(s_fake2, tape_g)
            backward(tape_g, g_loss, params=gen_params)
            adam_step(gen_params, None, adam_g)

            d_loss_val, g_loss_val = d_loss.item(), g_loss.item()
            if not np.isfinite(d_loss_val) or not np.isfinite(g_loss_val):
                raise NumericsError(
                    f"non-finite loss at step {step} (d={d_loss_val}, g={g_loss_val})"
                )
            record = StepRecord(
                step=step,
                epoch=epoch,
                g_loss=g_loss_val,
                d_loss=d_loss_val,
                acc_real=acc_real,
                acc_fake=acc_fake,
                d_skipped=skip_d,
                timestamp=time.time(),
            )
            log.append(record)
            if on_step is not None:
                on_step(record)
            step += 1

        if checkpoint_dir is not None:
            checkpoint_dir = Path(checkpoint_dir)
            model_io.save_net(checkpoint_dir / "gen.vxsn", gen, adam_g)
            model_io.save_net(checkpoint_dir / "disc.vxsn", disc, adam_d)
            model_io.update_bundle_meta(
                checkpoint_dir,
                resolution=ds.dims,
                latent_dim=cfg.latent_dim,
                base_channels=cfg.base_channels,
                epoch=epoch + 1,
                gan_config=asdict(cfg),
                rng_state=rng_noise.bit_generator.state,
            )
    return gen, disc, log


def sample_shapes(gen: GeneratorNet, n: int, rng: np.random.Generator) -> list:
    """n i.i.d. latents from N(0, I_d) with their generated grids."""
    if n < 1:
        raise ValueError("n must be >= 1")
    z = rng.standard_normal((n, gen.latent_dim))
    out = gen.forward(Tensor(z), train=False)
    return [(z[i].copy(), ContinuousGrid(out.data[i, 0])) for i in range(n)]


def interpolate(gen: GeneratorNet, z_r: np.ndarray, z_i: np.ndarray, steps: int) -> list:
    """Grids along lam*z_r + (1-lam)*z_i for lam uniformly spaced on [0, 1],
    starting at G(z_i) and ending at G(z_r)."""
    z_r = np.asarray(z_r, dtype=np.float64)
    z_i = np.asarray(z_i, dtype=np.float64)
    if z_r.shape != (gen.latent_dim,) or z_i.shape != (gen.latent_dim,):
        raise ValueError(f"latent vectors must be shaped ({gen.latent_dim},)")
    if steps < 2:
        raise ValueError("steps must be >= 2")
    grids = []
    # one forward per lambda: endpoint grids then match standalone
    # evaluations bit-for-bit (BLAS summation order varies with batch size)
    for lam in np.linspace(0.0, 1.0, steps):
        z = lam * z_r + (1.0 - lam) * z_i
        out = gen.forward(Tensor(z[np.newaxis]), train=False)
        grids.append(ContinuousGrid(out.data[0, 0]))
    return grids
