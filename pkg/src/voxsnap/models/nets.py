"""Generator, discriminator, and projection network definitions.

Desk-scale topology (resolution R, power of two in 8..64):

* generator: latent d -> linear -> (C0, 2, 2, 2) -> log2(R)-1 stride-2
  transposed-conv blocks (k=4, pad=1) halving channels each step, batch
  norm + ReLU between, sigmoid head producing (N, 1, R, R, R) in (0, 1).
* discriminator: mirror image with stride-2 convs, batch norm, LeakyReLU(0.2)
  and 50% volumetric dropout per block, then a linear+sigmoid scalar head.
  The deepest block output (C0 x 2x2x2, after its norm/activation/dropout
  wrappers) is the feature space used for the shape dissimilarity metric.
* projection network: discriminator stack without any dropout, head emits
  the latent through tanh, so outputs live in [-1, 1]^d.

All three share a resolution and, where relevant, a latent dimension; the
parameter dictionaries use stable dotted names for checkpointing.
"""

from __future__ import annotations

import numpy as np

from voxsnap.models.layers import BatchNorm, Conv3d, ConvTranspose3d, Linear
from voxsnap.tensor import Tape, Tensor
from voxsnap.tensor import ops


def _check_resolution(resolution: int) -> int:
    n_down = int(np.log2(resolution)) - 1
    if resolution not in (8, 16, 32, 64):
        raise ValueError(f"resolution must be one of 8/16/32/64, got {resolution}")
    return n_down


def _channel_schedule(base_channels: int, depth: int) -> list:
    """Widths from shallow to deep, doubling per stride-2 stage."""
    return [base_channels * 2**i for i in range(depth)]


class GeneratorNet:
    def __init__(self, latent_dim: int, resolution: int, base_channels: int = 32, rng=None):
        if rng is None:
            rng = np.random.default_rng()
        depth = _check_resolution(resolution)
        widths = _channel_schedule(base_channels, depth)[::-1]  # deep -> shallow
        self.latent_dim = latent_dim
        self.resolution = resolution
        self.base_channels = base_channels
        c0 = widths[0]
        self.fc = Linear(latent_dim, c0 * 8, rng=rng, bias=False)
        self.fc_bn = BatchNorm(c0)
        self.blocks = []
        for i in range(depth - 1):
            self.blocks.append(
                (ConvTranspose3d(widths[i], widths[i + 1], 4, 2, 1, rng=rng), BatchNorm(widths[i + 1]))
            )
        self.head = ConvTranspose3d(widths[-1], 1, 4, 2, 1, rng=rng, bias=True)

    def forward(
        self, z: Tensor, train: bool = False, tape: Tape | None = None, update_running: bool = True
    ) -> Tensor:
        if z.data.ndim != 2 or z.data.shape[1] != self.latent_dim:
            raise ValueError(f"latent batch must be (N, {self.latent_dim}), got {z.data.shape}")
        n = z.data.shape[0]
        c0 = self.fc.w.data.shape[1] // 8
        h = self.fc(z, tape)
        h = ops.reshape(h, (n, c0, 2, 2, 2), tape)
        h = self.fc_bn(h, train, tape, update_running)
        h = ops.relu(h, tape)
        for convt, bn in self.blocks:
            h = convt(h, tape)
            h = bn(h, train, tape, update_running)
            h = ops.relu(h, tape)
        return ops.sigmoid(self.head(h, tape), tape)

    def params(self) -> dict:
        out = {f"fc.{k}": v for k, v in self.fc.params().items()}
        out.update({f"fc_bn.{k}": v for k, v in self.fc_bn.params().items()})
        for i, (convt, bn) in enumerate(self.blocks):
            out.update({f"block{i}.convt.{k}": v for k, v in convt.params().items()})
            out.update({f"block{i}.bn.{k}": v for k, v in bn.params().items()})
        out.update({f"head.{k}": v for k, v in self.head.params().items()})
        return out

    def buffers(self) -> dict:
        out = {f"fc_bn.{k}": v for k, v in self.fc_bn.buffers().items()}
        for i, (_, bn) in enumerate(self.blocks):
            out.update({f"block{i}.bn.{k}": v for k, v in bn.buffers().items()})
        return out


class _ConvStack:
    """Shared discriminator-shaped trunk: stride-2 conv blocks down to 2^3."""

    def __init__(self, resolution, base_channels, rng, dropout_p):
        depth = _check_resolution(resolution)
        widths = _channel_schedule(base_channels, depth)
        self.dropout_p = dropout_p
        self.blocks = []
        cin = 1
        for w in widths:
            self.blocks.append((Conv3d(cin, w, 4, 2, 1, rng=rng), BatchNorm(w)))
            cin = w
        self.feature_channels = widths[-1]

    def forward(self, x, train, rng, tape, update_running=True):
        h = x
        for conv, bn in self.blocks:
            h = conv(h, tape)
            h = bn(h, train, tape, update_running)
            h = ops.leaky_relu(h, 0.2, tape)
            if self.dropout_p > 0:
                h = ops.dropout(h, self.dropout_p, train=train, rng=rng, tape=tape)
        return h

    def params(self):
        out = {}
        for i, (conv, bn) in enumerate(self.blocks):
            out.update({f"block{i}.conv.{k}": v for k, v in conv.params().items()})
            out.update({f"block{i}.bn.{k}": v for k, v in bn.params().items()})
        return out

    def buffers(self):
        out = {}
        for i, (_, bn) in enumerate(self.blocks):
            out.update({f"block{i}.bn.{k}": v for k, v in bn.buffers().items()})
        return out


class DiscriminatorNet:
    def __init__(self, resolution: int, base_channels: int = 32, dropout_p: float = 0.5, rng=None):
        if rng is None:
            rng = np.random.default_rng()
        self.resolution = resolution
        self.base_channels = base_channels
        self.stack = _ConvStack(resolution, base_channels, rng, dropout_p)
        self.head = Linear(self.stack.feature_channels * 8, 1, rng=rng)

    @property
    def feature_shape(self) -> tuple:
        return (self.stack.feature_channels, 2, 2, 2)

    def forward(
        self,
        x: Tensor,
        train: bool = False,
        rng=None,
        tape: Tape | None = None,
        update_running: bool = True,
    ) -> tuple:
        """One pass returning (sigmoid score (N,1), deepest-block features).

        Dropout fires only in train mode, so inference scores and features
        are deterministic."""
        if x.data.shape[2:] != (self.resolution,) * 3:
            raise ValueError(
                f"resolution mismatch: expected {self.resolution}^3, got {x.data.shape[2:]}"
            )
        feats = self.stack.forward(x, train, rng, tape, update_running)
        n = x.data.shape[0]
        flat = ops.reshape(feats, (n, self.stack.feature_channels * 8), tape)
        score = ops.sigmoid(self.head(flat, tape), tape)
        return score, feats

    def params(self) -> dict:
        out = self.stack.params()
        out.update({f"head.{k}": v for k, v in self.head.params().items()})
        return out

    def buffers(self) -> dict:
        return self.stack.buffers()


class ProjectionNet:
    """Maps a voxel grid to a latent vector in [-1, 1]^d (no dropout)."""

    def __init__(self, latent_dim: int, resolution: int, base_channels: int = 32, rng=None):
        if rng is None:
            rng = np.random.default_rng()
        self.latent_dim = latent_dim
        self.resolution = resolution
        self.base_channels = base_channels
        self.stack = _ConvStack(resolution, base_channels, rng, dropout_p=0.0)
        self.head = Linear(self.stack.feature_channels * 8, latent_dim, rng=rng)

    def forward(self, x: Tensor, train: bool = False, tape: Tape | None = None) -> Tensor:
        if x.data.shape[2:] != (self.resolution,) * 3:
            raise ValueError(
                f"resolution mismatch: expected {self.resolution}^3, got {x.data.shape[2:]}"
            )
        h = self.stack.forward(x, train, rng=None, tape=tape)
        n = x.data.shape[0]
        flat = ops.reshape(h, (n, self.stack.feature_channels * 8), tape)
        return ops.tanh(self.head(flat, tape), tape)

    def params(self) -> dict:
        out = self.stack.params()
        out.update({f"head.{k}": v for k, v in self.head.params().items()})
        return out

    def buffers(self) -> dict:
        return self.stack.buffers()


def named_params(net, prefix: str = "") -> dict:
    """Flat name->Tensor dict, optionally under a prefix."""
    return {f"{prefix}{k}": v for k, v in net.params().items()}


def freeze(net) -> None:
    for p in net.params().values():
        p.requires_grad = False


def unfreeze(net) -> None:
    for p in net.params().values():
        p.requires_grad = True


def state_arrays(net) -> dict:
    """All parameter and buffer arrays keyed by dotted name."""
    out = {k: v.data for k, v in net.params().items()}
    out.update(net.buffers())
    return out


def load_state_arrays(net, state: dict, strict: bool = True) -> None:
    """Copy checkpoint arrays into an existing net, shape-checked."""
    own = net.params()
    bufs = net.buffers()
    for name, tensor in own.items():
        if name not in state:
            if strict:
                raise KeyError(f"checkpoint missing parameter {name!r}")
            continue
        arr = np.asarray(state[name], dtype=np.float64)
        if arr.shape != tensor.data.shape:
            raise ValueError(f"{name}: checkpoint shape {arr.shape} != {tensor.data.shape}")
        tensor.data = np.ascontiguousarray(arr)
    for name, buf in bufs.items():
        if name not in state:
            if strict:
                raise KeyError(f"checkpoint missing buffer {name!r}")
            continue
        arr = np.asarray(state[name], dtype=np.float64)
        if arr.shape != buf.shape:
            raise ValueError(f"{name}: checkpoint shape {arr.shape} != {buf.shape}")
        buf[...] = arr
