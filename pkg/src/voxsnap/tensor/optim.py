"""Adam optimizer and weight initialization."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from voxsnap.tensor.core import Tensor


@dataclass
class AdamState:
    """Per-parameter moment accumulators plus the shared step counter.

    ``m``/``v`` are positionally aligned with the parameter list the state
    was created for.  beta1 defaults to 0.5 (the value used for training the
    networks here); beta2/eps are the usual Adam defaults.
    """

    lr: float
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(
        cls,
        params: Sequence[Tensor],
        lr: float,
        beta1: float = 0.5,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> "AdamState":
        return cls(
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
            t=0,
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
        )


def adam_step(
    params: Sequence[Tensor],
    grads: Optional[Sequence[np.ndarray]],
    state: AdamState,
) -> None:
    """One bias-corrected Adam update, in place on ``params[i].data``.

    ``grads=None`` reads each parameter's ``.grad`` buffer.  The epsilon sits
    outside the square root (original formulation), so a first step with
    gradient g moves the parameter by ~lr regardless of |g|.
    """
    if grads is None:
        grads = [p.grad for p in params]
    if len(params) != len(state.m):
        raise ValueError(f"state built for {len(state.m)} params, got {len(params)}")
    for p, g in zip(params, grads):
        if g is None:
            raise ValueError(f"missing gradient for parameter {p.name or '<unnamed>'}")
        if g.shape != p.data.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter {p.data.shape}"
            )

    state.t += 1
    b1c = 1.0 - state.beta1**state.t
    b2c = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p.data -= state.lr * (m / b1c) / (np.sqrt(v / b2c) + state.eps)


def he_init(
    shape: tuple, fan_in: int, rng: np.random.Generator
) -> Tensor:
    """Gaussian init with std sqrt(2/fan_in), suited to ReLU-family layers."""
    if fan_in < 1:
        raise ValueError("fan_in must be >= 1")
    std = np.sqrt(2.0 / fan_in)
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)
