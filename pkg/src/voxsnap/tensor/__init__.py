from voxsnap.tensor.core import NumericsError, Tape, Tensor, backward
from voxsnap.tensor.optim import AdamState, adam_step, he_init

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "NumericsError",
    "AdamState",
    "adam_step",
    "he_init",
]
