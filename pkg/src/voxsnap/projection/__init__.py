from voxsnap.projection.core import (
    RefineResult,
    SnapConfig,
    SnapResult,
    dissimilarity,
    gradient_baseline_project,
    project_network,
    realism,
    refine_latent,
    snap,
)
from voxsnap.projection.training import ProjTrainConfig, train_projection

__all__ = [
    "SnapConfig",
    "SnapResult",
    "RefineResult",
    "dissimilarity",
    "realism",
    "project_network",
    "refine_latent",
    "gradient_baseline_project",
    "snap",
    "ProjTrainConfig",
    "train_projection",
]
