from voxsnap.models.nets import DiscriminatorNet, GeneratorNet, ProjectionNet

__all__ = ["GeneratorNet", "DiscriminatorNet", "ProjectionNet"]
