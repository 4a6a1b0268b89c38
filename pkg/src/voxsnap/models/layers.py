"""Layer building blocks shared by the three networks.

Layers own their parameter tensors (and batch-norm running buffers) and are
pure callables otherwise; training/inference behaviour is chosen per call so
frozen read-only snapshots can be shared across threads.
"""

from __future__ import annotations

import numpy as np

from voxsnap.tensor import Tensor, he_init
from voxsnap.tensor import ops


class Conv3d:
    def __init__(self, cin, cout, k, stride, pad, rng, bias=False):
        self.stride, self.pad = stride, pad
        self.w = he_init((cout, cin, k, k, k), fan_in=cin * k**3, rng=rng)
        self.b = Tensor(np.zeros(cout), requires_grad=True) if bias else None

    def __call__(self, x, tape=None):
        y = ops.conv3d(x, self.w, self.stride, self.pad, tape)
        if self.b is not None:
            y = ops.bias_add(y, self.b, tape)
        return y

    def params(self):
        return {"w": self.w} if self.b is None else {"w": self.w, "b": self.b}


class ConvTranspose3d:
    def __init__(self, cin, cout, k, stride, pad, rng, bias=False):
        self.stride, self.pad = stride, pad
        # kernel layout (F=cin, C=cout, k,k,k): shared with conv3d's adjoint
        self.w = he_init((cin, cout, k, k, k), fan_in=cin * k**3, rng=rng)
        self.b = Tensor(np.zeros(cout), requires_grad=True) if bias else None

    def __call__(self, x, tape=None):
        y = ops.conv_transpose3d(x, self.w, self.stride, self.pad, tape)
        if self.b is not None:
            y = ops.bias_add(y, self.b, tape)
        return y

    def params(self):
        return {"w": self.w} if self.b is None else {"w": self.w, "b": self.b}


class BatchNorm:
    def __init__(self, channels, eps=1e-5, momentum=0.1):
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.eps, self.momentum = eps, momentum

    def __call__(self, x, train, tape=None, update_running=True):
        return ops.batch_norm(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            train=train,
            momentum=self.momentum,
            eps=self.eps,
            update_running=update_running,
            tape=tape,
        )

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}


class Linear:
    def __init__(self, cin, cout, rng, bias=True):
        self.w = he_init((cin, cout), fan_in=cin, rng=rng)
        self.b = Tensor(np.zeros(cout), requires_grad=True) if bias else None

    def __call__(self, x, tape=None):
        return ops.linear(x, self.w, self.b, tape)

    def params(self):
        return {"w": self.w} if self.b is None else {"w": self.w, "b": self.b}
