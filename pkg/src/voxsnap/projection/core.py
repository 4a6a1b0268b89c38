"""Shape dissimilarity, realism scoring, and the two-stage snap projection.

The snap pipeline maps an arbitrary edited voxel grid back onto the
generator's shape manifold:

1. the projection network predicts a latent vector (stage one: similarity),
2. bounded gradient descent refines it against
   lambda1 * dissimilarity(x, G(z)) - lambda2 * log(realism(G(z)))
   (stage two: realism within the local neighborhood),
3. the generated grid is binarized and postprocessed.

Dissimilarity is the L2 distance between deep discriminator features
("conv15" in the architecture notes: the deepest conv block output with its
norm/activation wrappers), always extracted in deterministic inference mode.
Realism enters the refinement objective through -log(score): same monotone
direction as -score but better conditioned near zero.

Refinement accepts a step only when it strictly decreases the objective
(backtracking halving, at most 5 halvings, otherwise terminate), which makes
monotone non-increase a structural guarantee rather than a tuning outcome.
The plain gradient-descent baseline used for comparisons shares the same
descent loop with the realism weight pinned to zero.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from voxsnap.models.gan import frozen
from voxsnap.models.nets import DiscriminatorNet, GeneratorNet, ProjectionNet
from voxsnap.tensor import NumericsError, Tape, Tensor, backward
from voxsnap.tensor import ops
from voxsnap.voxel import (
    ContinuousGrid,
    VoxelGrid,
    binarize,
    grid_to_json,
    remove_small_components,
    symmetrize,
)

GridLike = Union[VoxelGrid, ContinuousGrid, np.ndarray]

_MAX_HALVINGS = 5


@dataclass(frozen=True)
class SnapConfig:
    """Weights and switches for one snap invocation."""

    lambda1: float = 1.0
    lambda2: float = 0.1
    refine_steps: int = 30
    refine_lr: float = 0.05
    threshold: float = 0.5
    component_removal: bool = True
    min_component_fraction: float = 0.1
    connectivity: int = 26
    symmetrize: bool = False
    symmetry_axis: str = "X"
    symmetry_keep: str = "low"
    category: Optional[str] = None

    def validate(self) -> None:
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda weights must be >= 0")
        if self.refine_steps < 0:
            raise ValueError("refine_steps must be >= 0")
        if self.refine_lr <= 0:
            raise ValueError("refine_lr must be positive")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must be in (0, 1)")

    def with_overrides(self, **overrides) -> "SnapConfig":
        cfg = replace(self, **overrides)
        cfg.validate()
        return cfg


@dataclass
class RefineResult:
    z: np.ndarray
    f_initial: float
    f_final: float
    steps_taken: int


@dataclass
class SnapResult:
    grid: VoxelGrid
    z_initial: np.ndarray
    z_final: np.ndarray
    metrics: dict
    warnings: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "grid": grid_to_json(self.grid),
            "z_initial": [float(v) for v in self.z_initial],
            "z_final": [float(v) for v in self.z_final],
            "metrics": {k: (int(v) if k == "steps_taken" else float(v)) for k, v in self.metrics.items()},
            "warnings": list(self.warnings),
        }


def as_input_batch(x: GridLike) -> np.ndarray:
    """(1, 1, R, R, R) float64 view of any grid-like input."""
    if isinstance(x, VoxelGrid):
        arr = x.occupancy.astype(np.float64)
    elif isinstance(x, ContinuousGrid):
        arr = x.values
    else:
        arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 5:
        return arr
    if arr.ndim != 3:
        raise ValueError(f"expected a rank-3 grid, got rank {arr.ndim}")
    return arr[np.newaxis, np.newaxis]


def conv15(disc: DiscriminatorNet, x: GridLike) -> np.ndarray:
    """Deterministic deep-feature descriptor of a single grid."""
    _, feats = disc.forward(Tensor(as_input_batch(x)), train=False)
    return feats.data[0]


def dissimilarity(x1: GridLike, x2: GridLike, disc: DiscriminatorNet) -> float:
    """L2 distance between the conv15 descriptors; a pseudometric."""
    f1, f2 = conv15(disc, x1), conv15(disc, x2)
    return float(np.linalg.norm(f1 - f2))


def realism(x: GridLike, disc: DiscriminatorNet) -> float:
    """Discriminator score in (0, 1), inference mode."""
    score, _ = disc.forward(Tensor(as_input_batch(x)), train=False)
    return float(score.data.reshape(()))


def project_network(proj: ProjectionNet, x: GridLike) -> np.ndarray:
    """Stage-one projection: deterministic latent prediction in [-1, 1]^d."""
    z = proj.forward(Tensor(as_input_batch(x)), train=False)
    return z.data[0].copy()


class _Objective:
    """f(z) = lambda1 * ||conv15(G(z)) - conv15(x)|| - lambda2 * log(R(G(z)))."""

    def __init__(self, x, gen, disc, lambda1, lambda2):
        self.gen, self.disc = gen, disc
        self.lambda1, self.lambda2 = lambda1, lambda2
        self.target = conv15(disc, x)

    def _build(self, z_arr, tape):
        z = Tensor(z_arr[np.newaxis], requires_grad=tape is not None)
        out = self.gen.forward(z, train=False, tape=tape)
        score, feats = self.disc.forward(out, train=False, tape=tape)
        diff = ops.sub(feats, Tensor(self.target[np.newaxis]), tape)
        dterm = ops.sqrt(ops.sum_all(ops.mul(diff, diff, tape), tape), tape)
        rterm = ops.log_eps(ops.sum_all(score, tape), tape=tape)
        f = ops.add(
            ops.scale_shift(dterm, self.lambda1, tape=tape),
            ops.scale_shift(rterm, -self.lambda2, tape=tape),
            tape,
        )
        return f, z

    def value(self, z_arr) -> float:
        f, _ = self._build(z_arr, None)
        val = f.item()
        if not np.isfinite(val):
            raise NumericsError("non-finite refinement objective")
        return val

    def value_and_grad(self, z_arr):
        tape = Tape()
        f, z = self._build(z_arr, tape)
        val = f.item()
        if not np.isfinite(val):
            raise NumericsError("non-finite refinement objective")
        backward(tape, f, params=[z])
        return val, z.grad[0].copy()


def _descend(objective: _Objective, z0: np.ndarray, steps: int, lr0: float) -> RefineResult:
    """Monotone gradient descent with backtracking halving line search."""
    z = np.asarray(z0, dtype=np.float64).copy()
    if not np.all(np.isfinite(z)):
        raise ValueError("initial latent must be finite")
    with frozen(objective.gen, objective.disc):
        f0, grad = objective.value_and_grad(z)
        f_cur = f0
        taken = 0
        for _ in range(steps):
            lr = lr0
            accepted = False
            for _ in range(_MAX_HALVINGS + 1):
                cand = z - lr * grad
                f_cand = objective.value(cand)
                if f_cand < f_cur:
                    accepted = True
                    break
                lr *= 0.5
            if not accepted:
                break
            z, f_cur = cand, f_cand
            taken += 1
            if taken < steps:
                _, grad = objective.value_and_grad(z)
    return RefineResult(z=z, f_initial=f0, f_final=f_cur, steps_taken=taken)


def refine_latent(
    z0: np.ndarray,
    x: GridLike,
    gen: GeneratorNet,
    disc: DiscriminatorNet,
    cfg: SnapConfig,
) -> RefineResult:
    """Stage-two refinement from z0; the returned objective never exceeds
    the starting one. z is unconstrained (it may leave [-1, 1]^d)."""
    cfg.validate()
    objective = _Objective(x, gen, disc, cfg.lambda1, cfg.lambda2)
    if cfg.refine_steps == 0:
        f0 = objective.value(np.asarray(z0, dtype=np.float64))
        return RefineResult(np.asarray(z0, dtype=np.float64).copy(), f0, f0, 0)
    return _descend(objective, z0, cfg.refine_steps, cfg.refine_lr)


def gradient_baseline_project(
    x: GridLike,
    gen: GeneratorNet,
    disc: DiscriminatorNet,
    z_init: np.ndarray,
    steps: int,
    lr: float,
) -> RefineResult:
    """Plain descent on dissimilarity alone (no realism term, no projection
    network): the comparison baseline that follows the manifold gradient."""
    objective = _Objective(x, gen, disc, lambda1=1.0, lambda2=0.0)
    if steps == 0:
        z = np.asarray(z_init, dtype=np.float64).copy()
        f0 = objective.value(z)
        return RefineResult(z, f0, f0, 0)
    return _descend(objective, z_init, steps, lr)


def generate_grid(gen: GeneratorNet, z: np.ndarray) -> ContinuousGrid:
    out = gen.forward(Tensor(np.asarray(z, dtype=np.float64)[np.newaxis]), train=False)
    return ContinuousGrid(out.data[0, 0])


def snap(
    x: VoxelGrid,
    gen: GeneratorNet,
    disc: DiscriminatorNet,
    proj: ProjectionNet,
    cfg: Optional[SnapConfig] = None,
) -> SnapResult:
    """Full snap: project, refine, generate, binarize, postprocess."""
    cfg = cfg or SnapConfig()
    cfg.validate()
    if not (gen.resolution == disc.resolution == proj.resolution == x.dims):
        raise ValueError(
            f"resolution mismatch: grid {x.dims}, gen {gen.resolution}, "
            f"disc {disc.resolution}, proj {proj.resolution}"
        )
    t0 = time.perf_counter()
    z0 = project_network(proj, x)
    refined = refine_latent(z0, x, gen, disc, cfg)

    initial_grid = generate_grid(gen, z0)
    final_grid = generate_grid(gen, refined.z)
    metrics = {
        "dissimilarity_initial": dissimilarity(x, initial_grid, disc),
        "dissimilarity_final": dissimilarity(x, final_grid, disc),
        "realism_initial": realism(initial_grid, disc),
        "realism_final": realism(final_grid, disc),
        "steps_taken": refined.steps_taken,
    }

    warnings = []
    out = binarize(final_grid, cfg.threshold)
    if out.count == 0:
        warnings.append("empty_output")
    if cfg.component_removal:
        out = remove_small_components(out, cfg.min_component_fraction, cfg.connectivity)
    if cfg.symmetrize:
        out = symmetrize(out, cfg.symmetry_axis, cfg.symmetry_keep)
        if out.count == 0 and "empty_output" not in warnings:
            warnings.append("empty_output")

    metrics["wall_time"] = time.perf_counter() - t0
    return SnapResult(
        grid=out,
        z_initial=z0,
        z_final=refined.z,
        metrics=metrics,
        warnings=warnings,
    )
