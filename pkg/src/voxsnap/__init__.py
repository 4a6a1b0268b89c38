"""voxsnap: GAN-assisted interactive 3D voxel modeling."""

__version__ = "0.1.0"
