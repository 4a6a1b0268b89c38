import numpy as np
import pytest

from voxsnap.dataset import build_dataset
from voxsnap.models.nets import DiscriminatorNet, GeneratorNet, ProjectionNet

TINY = dict(latent_dim=4, resolution=8, base_channels=4)


@pytest.fixture(scope="session")
def tiny_nets():
    """Untrained small nets: enough for contract/property tests."""
    rng = np.random.default_rng(1234)
    gen = GeneratorNet(TINY["latent_dim"], TINY["resolution"], TINY["base_channels"], rng=rng)
    disc = DiscriminatorNet(TINY["resolution"], TINY["base_channels"], rng=rng)
    proj = ProjectionNet(TINY["latent_dim"], TINY["resolution"], TINY["base_channels"], rng=rng)
    return gen, disc, proj


@pytest.fixture(scope="session")
def tiny_dataset():
    return build_dataset("chair", n_train=24, n_heldout=4, dims=8, seed=99)
