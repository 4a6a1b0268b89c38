"""The frozen desk-scale reference run.

16^3 grids, 32-d latents, 512 procedural chairs: the fixed-seed pipeline
every quality gate is calibrated against.  ``build_reference`` trains (or
reloads) the reference bundle under a content-addressed cache directory so
repeated acceptance runs do not retrain; delete the directory or set
``VOXSNAP_REFRESH_REFERENCE=1`` to force a fresh run.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict
from pathlib import Path

from voxsnap.dataset import Dataset, build_dataset
from voxsnap.ioutil import atomic_write_text
from voxsnap.models import io as model_io
from voxsnap.models.gan import GanTrainConfig, train_gan
from voxsnap.projection import ProjTrainConfig, train_projection

REFERENCE_DATASET = dict(category="chair", n_train=512, n_heldout=64, dims=16, seed=7)

REFERENCE_GAN = GanTrainConfig(
    epochs=30,
    batch_size=64,
    latent_dim=32,
    lr_g=0.0025,
    lr_d=2e-4,
    beta1=0.5,
    dropout_p=0.5,
    base_channels=32,
    seed=0,
)

REFERENCE_PROJ = ProjTrainConfig(
    epochs=20,
    batch_size=50,
    lr=0.0005,
    beta1=0.5,
    drop_fraction=0.5,
    seed=0,
)


def reference_fingerprint() -> str:
    blob = json.dumps(
        {"dataset": REFERENCE_DATASET, "gan": asdict(REFERENCE_GAN), "proj": asdict(REFERENCE_PROJ)},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def reference_dataset() -> Dataset:
    return build_dataset(**REFERENCE_DATASET)


def build_reference(cache_root, force: bool = False, on_step=None) -> Path:
    """Train or reload the reference bundle; returns the bundle directory.

    The directory carries run_metadata.json with the measured training wall
    times and the CPU count they were measured on.
    """
    cache_root = Path(cache_root)
    bundle_dir = cache_root / f"reference-{reference_fingerprint()}"
    meta_path = bundle_dir / "run_metadata.json"
    force = force or bool(os.environ.get("VOXSNAP_REFRESH_REFERENCE"))
    if meta_path.exists() and not force:
        return bundle_dir

    ds = reference_dataset()
    t0 = time.perf_counter()
    gen, disc, gan_log = train_gan(ds, REFERENCE_GAN, checkpoint_dir=bundle_dir, on_step=on_step)
    gan_seconds = time.perf_counter() - t0
    gan_log.to_csv(bundle_dir / "gan_trainlog.csv")

    t0 = time.perf_counter()
    proj, proj_log = train_projection(
        ds, gen, disc, REFERENCE_PROJ, checkpoint_dir=bundle_dir
    )
    proj_seconds = time.perf_counter() - t0
    proj_log.to_csv(bundle_dir / "proj_trainlog.csv")

    model_io.update_bundle_meta(bundle_dir, category=REFERENCE_DATASET["category"])
    atomic_write_text(
        meta_path,
        json.dumps(
            {
                "gan_train_seconds": gan_seconds,
                "proj_train_seconds": proj_seconds,
                "cpu_count": os.cpu_count(),
                "final_epoch_mean_disc_accuracy": _final_epoch_accuracy(gan_log),
                "proj_first_epoch_mean_loss": proj_log.epoch_mean_loss(0),
                "proj_final_epoch_mean_loss": proj_log.epoch_mean_loss(REFERENCE_PROJ.epochs - 1),
                "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
            },
            indent=2,
        )
        + "\n",
    )
    return bundle_dir


def _final_epoch_accuracy(log) -> float:
    records = log.epoch(REFERENCE_GAN.epochs - 1)
    return sum(r.accuracy for r in records) / len(records)


def load_reference(bundle_dir):
    """(dataset, gen, disc, proj, metadata) for a built reference bundle."""
    bundle_dir = Path(bundle_dir)
    gen, disc, _ = model_io.load_gan(bundle_dir)
    proj = model_io.load_projection(bundle_dir)
    metadata = json.loads((bundle_dir / "run_metadata.json").read_text())
    return reference_dataset(), gen, disc, proj, metadata
