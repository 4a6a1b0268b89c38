"""Evaluation procedures for the trained models.

Each returns plain row dicts (the CLI renders them to CSV):

* ``latent_distance_correlation`` - probe how dissimilarity grows with L2
  distance from the projected latent.
* ``projection_report`` - stage-one vs full two-stage projection quality on
  voxel-dropped held-out shapes.
* ``baseline_comparison`` - snap vs plain gradient descent after a large
  destructive edit.
* ``feature_mode_split`` - 2-means clustering of sample descriptors, the
  collapse guard for generator training.
"""

from __future__ import annotations

import numpy as np
from scipy import stats

from voxsnap.models.nets import DiscriminatorNet, GeneratorNet, ProjectionNet
from voxsnap.projection.core import (
    SnapConfig,
    as_input_batch,
    dissimilarity,
    gradient_baseline_project,
    generate_grid,
    project_network,
    realism,
    refine_latent,
)
from voxsnap.tensor import Tensor
from voxsnap.voxel import VoxelGrid, drop_voxels


def _batched_forward(gen, disc, z_all, chunk=64):
    """Generated grids and their conv15 features/scores for many latents."""
    feats, scores, grids = [], [], []
    for start in range(0, len(z_all), chunk):
        z = Tensor(z_all[start : start + chunk])
        out = gen.forward(z, train=False)
        score, f = disc.forward(out, train=False)
        grids.append(out.data[:, 0])
        feats.append(f.data)
        scores.append(score.data[:, 0])
    return np.concatenate(grids), np.concatenate(feats), np.concatenate(scores)


def latent_distance_correlation(
    x_grids: list,
    gen: GeneratorNet,
    proj: ProjectionNet,
    disc: DiscriminatorNet,
    n_probe: int,
    radius_set: list,
    rng: np.random.Generator,
) -> list:
    """Rows (shape_index, radius, distance, dissimilarity) for latents
    sampled at fixed radii around each shape's projection."""
    rows = []
    d = gen.latent_dim
    for xi, x in enumerate(x_grids):
        z0 = project_network(proj, x)
        target = _conv15_flat(disc, x)
        probes, radii = [], []
        for r in radius_set:
            for _ in range(n_probe):
                u = rng.standard_normal(d)
                u /= np.linalg.norm(u)
                probes.append(z0 + r * u)
                radii.append(r)
        _, feats, _ = _batched_forward(gen, disc, np.asarray(probes))
        for (z, r, f) in zip(probes, radii, feats):
            rows.append(
                {
                    "shape_index": xi,
                    "radius": r,
                    "distance": float(np.linalg.norm(np.asarray(z) - z0)),
                    "dissimilarity": float(np.linalg.norm(f.ravel() - target)),
                }
            )
    return rows


def _conv15_flat(disc, x):
    _, f = disc.forward(Tensor(as_input_batch(x)), train=False)
    return f.data[0].ravel()


def spearman_correlation(rows: list, x_key: str = "distance", y_key: str = "dissimilarity") -> float:
    xs = [r[x_key] for r in rows]
    ys = [r[y_key] for r in rows]
    return float(stats.spearmanr(xs, ys).statistic)


def projection_report(
    heldout: list,
    gen: GeneratorNet,
    disc: DiscriminatorNet,
    proj: ProjectionNet,
    cfg: SnapConfig,
    drop_fraction: float,
    rng: np.random.Generator,
) -> tuple:
    """Per-shape dissimilarity/realism for G(P_n(x)) (stage one) and G(P(x))
    (two-stage), on voxel-dropped held-out inputs. Returns (rows, summary)."""
    if not heldout:
        raise ValueError("empty held-out set")
    rows = []
    for i, clean in enumerate(heldout):
        x = drop_voxels(clean, drop_fraction, rng)
        z_s = project_network(proj, x)
        refined = refine_latent(z_s, x, gen, disc, cfg)
        stage1 = generate_grid(gen, z_s)
        stage2 = generate_grid(gen, refined.z)
        rows.append(
            {
                "shape_index": i,
                "dissimilarity_network": dissimilarity(x, stage1, disc),
                "realism_network": realism(stage1, disc),
                "dissimilarity_full": dissimilarity(x, stage2, disc),
                "realism_full": realism(stage2, disc),
                "refine_steps_taken": refined.steps_taken,
            }
        )
    summary = {
        key: float(np.mean([r[key] for r in rows]))
        for key in (
            "dissimilarity_network",
            "realism_network",
            "dissimilarity_full",
            "realism_full",
        )
    }
    return rows, summary


def delete_top_third(grid: VoxelGrid) -> VoxelGrid:
    """The destructive edit used by the baseline comparison: clear every
    voxel in the top third of the grid (Z axis)."""
    occ = grid.occupancy.copy()
    occ[grid.dims - grid.dims // 3 :] = False
    return VoxelGrid(occ)


def baseline_comparison(
    heldout: list,
    gen: GeneratorNet,
    disc: DiscriminatorNet,
    proj: ProjectionNet,
    cfg: SnapConfig,
) -> list:
    """Snap vs plain gradient descent from the pre-edit latent, after the
    top third of each shape is deleted."""
    rows = []
    for i, clean in enumerate(heldout):
        edited = delete_top_third(clean)
        # snap route: project the edited grid, then refine
        z_snap0 = project_network(proj, edited)
        snap_ref = refine_latent(z_snap0, edited, gen, disc, cfg)
        # baseline route: descend on dissimilarity from the pre-edit latent
        z_before = project_network(proj, clean)
        base_ref = gradient_baseline_project(
            edited, gen, disc, z_before, cfg.refine_steps, cfg.refine_lr
        )
        rows.append(
            {
                "shape_index": i,
                "realism_snap": realism(generate_grid(gen, snap_ref.z), disc),
                "realism_baseline": realism(generate_grid(gen, base_ref.z), disc),
                "dissimilarity_snap": dissimilarity(
                    edited, generate_grid(gen, snap_ref.z), disc
                ),
                "dissimilarity_baseline": dissimilarity(
                    edited, generate_grid(gen, base_ref.z), disc
                ),
            }
        )
    return rows


def feature_mode_split(features: np.ndarray, rng: np.random.Generator, iters: int = 100) -> np.ndarray:
    """Two-means cluster labels over sample descriptors (collapse guard:
    a healthy generator yields two well-populated clusters)."""
    n = features.shape[0]
    flat = features.reshape(n, -1)
    first = int(rng.integers(n))
    # second seed: farthest point from the first, a deterministic 2-means++ analogue
    second = int(np.argmax(np.linalg.norm(flat - flat[first], axis=1)))
    centers = np.stack([flat[first], flat[second]])
    labels = None
    for _ in range(iters):
        dists = np.linalg.norm(flat[:, None, :] - centers[None], axis=2)
        new_labels = np.argmin(dists, axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for k in (0, 1):
            members = flat[labels == k]
            if len(members):
                centers[k] = members.mean(axis=0)
    return labels
