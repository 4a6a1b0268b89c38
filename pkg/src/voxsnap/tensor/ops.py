"""Differentiable primitive operations.

Every op computes its forward result eagerly with numpy (convolutions go
through ``voxsnap.kernels``) and, when a tape is supplied, registers a
closure producing the analytic input gradients.  Passing ``tape=None`` runs
plain inference with zero bookkeeping.

Volumetric layout is ``(N, C, D, H, W)``; convolution kernels are
``(F, C, k, k, k)`` and are shared between ``conv3d`` (C -> F channels) and
its exact adjoint ``conv_transpose3d`` (F -> C).
"""

from __future__ import annotations

import numpy as np

from voxsnap import kernels
from voxsnap.tensor.core import Tape, Tensor


def _out_extent(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def conv3d(x: Tensor, kern: Tensor, stride: int = 1, pad: int = 0, tape: Tape | None = None) -> Tensor:
    """Cross-correlation of a (N,C,D,H,W) volume with a (F,C,k,k,k) kernel,
    zero-padded by ``pad`` on each spatial side."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if x.data.ndim != 5 or kern.data.ndim != 5:
        raise ValueError("conv3d expects rank-5 input and kernel")
    if x.data.shape[1] != kern.data.shape[1]:
        raise ValueError(
            f"channel mismatch: input has {x.data.shape[1]}, kernel expects {kern.data.shape[1]}"
        )
    if kern.data.shape[2] > x.data.shape[2] + 2 * pad:
        raise ValueError("kernel larger than padded input")
    out = Tensor(kernels.conv3d_forward(x.data, kern.data, stride, pad))
    if tape is not None:
        x_spatial, k_data, x_data = x.data.shape[2:], kern.data, x.data

        def bwd(g, want):
            gx = gk = None
            if want[0]:
                gx = kernels.conv_transpose3d_forward(g, k_data, stride, pad, x_spatial)
            if want[1]:
                gk = kernels.conv3d_kernel_grad(x_data, g, k_data.shape, stride, pad)
            return gx, gk

        tape.record("conv3d", (x, kern), out, bwd)
    return out


def conv_transpose3d(
    x: Tensor, kern: Tensor, stride: int = 1, pad: int = 0, tape: Tape | None = None
) -> Tensor:
    """Adjoint of ``conv3d`` with the same kernel and geometry: maps a
    (N,F,D,H,W) volume to (N,C,D',H',W') with D' = (D-1)*stride - 2*pad + k."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if x.data.shape[1] != kern.data.shape[0]:
        raise ValueError(
            f"channel mismatch: input has {x.data.shape[1]}, kernel expects {kern.data.shape[0]}"
        )
    out = Tensor(kernels.conv_transpose3d_forward(x.data, kern.data, stride, pad))
    if tape is not None:
        k_data, x_data = kern.data, x.data

        def bwd(g, want):
            gx = kernels.conv3d_forward(g, k_data, stride, pad) if want[0] else None
            gk = (
                kernels.conv3d_kernel_grad(g, x_data, k_data.shape, stride, pad)
                if want[1]
                else None
            )
            return gx, gk

        tape.record("conv_transpose3d", (x, kern), out, bwd)
    return out


def linear(x: Tensor, w: Tensor, b: Tensor | None = None, tape: Tape | None = None) -> Tensor:
    """x (N,in) @ w (in,out) plus optional bias (out,)."""
    if x.data.shape[1] != w.data.shape[0]:
        raise ValueError(f"linear shape mismatch: {x.data.shape} @ {w.data.shape}")
    y = x.data @ w.data
    if b is not None:
        y = y + b.data
    out = Tensor(y)
    if tape is not None:
        x_data, w_data = x.data, w.data
        if b is None:

            def bwd(g, want):
                return (
                    g @ w_data.T if want[0] else None,
                    x_data.T @ g if want[1] else None,
                )

            tape.record("linear", (x, w), out, bwd)
        else:

            def bwd(g, want):
                return (
                    g @ w_data.T if want[0] else None,
                    x_data.T @ g if want[1] else None,
                    g.sum(axis=0) if want[2] else None,
                )

            tape.record("linear", (x, w, b), out, bwd)
    return out


def bias_add(x: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    """Add a per-channel bias (C,) to a (N,C,...) tensor."""
    if b.data.shape != (x.data.shape[1],):
        raise ValueError(f"bias shape {b.data.shape} does not match channels {x.data.shape[1]}")
    shape = (1, -1) + (1,) * (x.data.ndim - 2)
    out = Tensor(x.data + b.data.reshape(shape))
    if tape is not None:
        reduce_axes = (0,) + tuple(range(2, x.data.ndim))

        def bwd(g, want):
            return (
                g if want[0] else None,
                g.sum(axis=reduce_axes) if want[1] else None,
            )

        tape.record("bias_add", (x, b), out, bwd)
    return out


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
    update_running: bool = True,
    tape: Tape | None = None,
) -> Tensor:
    """Per-channel normalization over batch and spatial axes.

    Train mode normalizes with the current batch moments (biased variance)
    and, unless ``update_running`` is off, folds them into the running
    buffers in place.  Infer mode applies the running statistics, making the
    op a fixed affine map.
    """
    c = x.data.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ValueError("gamma/beta must be shaped (C,)")
    axes = (0,) + tuple(range(2, x.data.ndim))
    bshape = (1, c) + (1,) * (x.data.ndim - 2)
    g_b = gamma.data.reshape(bshape)

    if train:
        if x.data.shape[0] < 2:
            raise ValueError("batch_norm train mode needs batch size >= 2")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if update_running:
            running_mean *= 1.0 - momentum
            running_mean += momentum * mu
            running_var *= 1.0 - momentum
            running_var += momentum * var
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu.reshape(bshape)) * inv_std.reshape(bshape)
        out = Tensor(g_b * xhat + beta.data.reshape(bshape))
        if tape is not None:
            inv_b = inv_std.reshape(bshape)

            def bwd(g, want):
                gx = dgamma = dbeta = None
                if want[1]:
                    dgamma = (g * xhat).sum(axis=axes)
                if want[2]:
                    dbeta = g.sum(axis=axes)
                if want[0]:
                    dxhat = g * g_b
                    mean_dxhat = dxhat.mean(axis=axes).reshape(bshape)
                    mean_dxhat_xhat = (dxhat * xhat).mean(axis=axes).reshape(bshape)
                    gx = inv_b * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)
                return gx, dgamma, dbeta

            tape.record("batch_norm", (x, gamma, beta), out, bwd)
        return out

    inv_std = 1.0 / np.sqrt(running_var + eps)
    xnorm = (x.data - running_mean.reshape(bshape)) * inv_std.reshape(bshape)
    out = Tensor(g_b * xnorm + beta.data.reshape(bshape))
    if tape is not None:
        scale = (gamma.data * inv_std).reshape(bshape)

        def bwd(g, want):
            return (
                g * scale if want[0] else None,
                (g * xnorm).sum(axis=axes) if want[1] else None,
                g.sum(axis=axes) if want[2] else None,
            )

        tape.record("batch_norm", (x, gamma, beta), out, bwd)
    return out


def dropout(
    x: Tensor,
    p: float,
    train: bool,
    rng: np.random.Generator | None = None,
    tape: Tape | None = None,
) -> Tensor:
    """Inverted dropout: zero each element with probability p and scale the
    survivors by 1/(1-p). Inference mode is the exact identity."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    scaled_mask = (rng.random(x.data.shape) >= p) / (1.0 - p)
    out = Tensor(x.data * scaled_mask)
    if tape is not None:
        tape.record(
            "dropout", (x,), out, lambda g, want: (g * scaled_mask if want[0] else None,)
        )
    return out


def leaky_relu(x: Tensor, slope: float = 0.2, tape: Tape | None = None) -> Tensor:
    out = Tensor(np.where(x.data > 0, x.data, slope * x.data))
    if tape is not None:
        factor = np.where(x.data > 0, 1.0, slope)
        tape.record(
            "leaky_relu", (x,), out, lambda g, want: (g * factor if want[0] else None,)
        )
    return out


def relu(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0))
    if tape is not None:
        mask = x.data > 0
        tape.record("relu", (x,), out, lambda g, want: (g * mask if want[0] else None,))
    return out


def sigmoid(x: Tensor, tape: Tape | None = None) -> Tensor:
    xd = x.data
    y = np.empty_like(xd)
    pos = xd >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Tensor(y)
    if tape is not None:
        tape.record(
            "sigmoid", (x,), out, lambda g, want: (g * y * (1.0 - y) if want[0] else None,)
        )
    return out


def tanh(x: Tensor, tape: Tape | None = None) -> Tensor:
    y = np.tanh(x.data)
    out = Tensor(y)
    if tape is not None:
        tape.record(
            "tanh", (x,), out, lambda g, want: (g * (1.0 - y * y) if want[0] else None,)
        )
    return out


def add(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    _check_same_shape("add", a, b)
    out = Tensor(a.data + b.data)
    if tape is not None:
        tape.record(
            "add",
            (a, b),
            out,
            lambda g, want: (g if want[0] else None, g if want[1] else None),
        )
    return out


def sub(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    _check_same_shape("sub", a, b)
    out = Tensor(a.data - b.data)
    if tape is not None:
        tape.record(
            "sub",
            (a, b),
            out,
            lambda g, want: (g if want[0] else None, -g if want[1] else None),
        )
    return out


def mul(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    _check_same_shape("mul", a, b)
    out = Tensor(a.data * b.data)
    if tape is not None:
        a_data, b_data = a.data, b.data
        tape.record(
            "mul",
            (a, b),
            out,
            lambda g, want: (g * b_data if want[0] else None, g * a_data if want[1] else None),
        )
    return out


def scale_shift(x: Tensor, scale: float, shift: float = 0.0, tape: Tape | None = None) -> Tensor:
    """Elementwise scale*x + shift with python-scalar coefficients."""
    out = Tensor(scale * x.data + shift)
    if tape is not None:
        tape.record(
            "scale_shift", (x,), out, lambda g, want: (scale * g if want[0] else None,)
        )
    return out


def log_eps(x: Tensor, eps: float = 1e-7, tape: Tape | None = None) -> Tensor:
    """log(x + eps): the epsilon keeps probabilities away from log(0) while
    leaving the op smooth for gradient checking."""
    shifted = x.data + eps
    if np.any(shifted <= 0):
        raise ValueError("log_eps input must be > -eps")
    out = Tensor(np.log(shifted))
    if tape is not None:
        tape.record(
            "log_eps", (x,), out, lambda g, want: (g / shifted if want[0] else None,)
        )
    return out


def sqrt(x: Tensor, tape: Tape | None = None) -> Tensor:
    if np.any(x.data < 0):
        raise ValueError("sqrt of negative value")
    y = np.sqrt(x.data)
    out = Tensor(y)
    if tape is not None:
        denom = 2.0 * np.maximum(y, 1e-12)
        tape.record("sqrt", (x,), out, lambda g, want: (g / denom if want[0] else None,))
    return out


def sum_all(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor(np.array(x.data.sum()))
    if tape is not None:
        shape = x.data.shape
        tape.record(
            "sum_all",
            (x,),
            out,
            lambda g, want: (np.full(shape, float(g.reshape(()))) if want[0] else None,),
        )
    return out


def mean_all(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor(np.array(x.data.mean()))
    if tape is not None:
        shape, n = x.data.shape, x.data.size
        tape.record(
            "mean_all",
            (x,),
            out,
            lambda g, want: (np.full(shape, float(g.reshape(())) / n) if want[0] else None,),
        )
    return out


def sum_over(x: Tensor, axes: tuple, tape: Tape | None = None) -> Tensor:
    """Reduce-sum over the given axes (no kept dims)."""
    axes = tuple(sorted(a % x.data.ndim for a in axes))
    out = Tensor(x.data.sum(axis=axes))
    if tape is not None:
        shape = x.data.shape
        expand = tuple(1 if i in axes else s for i, s in enumerate(shape))

        def bwd(g, want):
            if not want[0]:
                return (None,)
            return (np.broadcast_to(g.reshape(expand), shape).copy(),)

        tape.record("sum_over", (x,), out, bwd)
    return out


def reshape(x: Tensor, shape: tuple, tape: Tape | None = None) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    if tape is not None:
        orig = x.data.shape
        tape.record(
            "reshape", (x,), out, lambda g, want: (g.reshape(orig) if want[0] else None,)
        )
    return out


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise ValueError(f"{op} shape mismatch: {a.data.shape} vs {b.data.shape}")
