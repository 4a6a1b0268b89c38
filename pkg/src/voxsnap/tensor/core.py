"""Dense float64 tensors with explicit-tape reverse-mode differentiation.

The engine is deliberately minimal: a ``Tensor`` is a contiguous float64
ndarray plus an optional gradient buffer, and a ``Tape`` is the ordered
record of primitive ops applied during one forward pass.  Gradients are
obtained by walking the tape backwards (``backward``).  There is no global
graph state, so independent passes (e.g. concurrent snap requests) never
interact as long as they use separate tapes.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np


class NumericsError(RuntimeError):
    """A forward or backward pass produced non-finite values."""


class Tensor:
    """Shape-checked float64 array with an optional gradient buffer.

    ``requires_grad`` marks leaves (parameters, optimized latents).  The
    gradient buffer always has the same shape as ``data``; it is (re)assigned
    by ``backward``, never mutated incrementally.
    """

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim > 5:
            raise ValueError(f"rank {arr.ndim} exceeds the supported maximum of 5")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of size {self.data.size}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """Same storage, severed from any gradient path."""
        t = Tensor.__new__(Tensor)
        t.data = self.data
        t.grad = None
        t.requires_grad = False
        t.name = self.name
        return t

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag}, requires_grad={self.requires_grad})"


class _OpRecord:
    __slots__ = ("op", "inputs", "output", "backward_fn")

    def __init__(self, op, inputs, output, backward_fn):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of primitive-op applications from one forward pass.

    Ops self-register at execution time, so the record is topologically
    ordered by construction and every tensor is produced before use.  Ops
    whose inputs are all constants (no path to a watched leaf) are not
    recorded at all; this is what makes frozen-network passes cheap.
    """

    def __init__(self):
        self.ops: list[_OpRecord] = []
        self._active: set[int] = set()

    def __len__(self) -> int:
        return len(self.ops)

    def watched(self, t: Tensor) -> bool:
        return t.requires_grad or id(t) in self._active

    def record(
        self,
        op: str,
        inputs: Sequence[Tensor],
        output: Tensor,
        backward_fn: Callable,
    ) -> bool:
        """Append one op application. ``backward_fn(out_grad, want)`` must
        return one gradient array (or None) per input; entries with
        ``want[i] == False`` may be skipped.  Returns False when the op sits
        on a constant subgraph and was not recorded."""
        if not any(self.watched(t) for t in inputs):
            return False
        self._active.add(id(output))
        self.ops.append(_OpRecord(op, tuple(inputs), output, backward_fn))
        return True


def backward(
    tape: Tape,
    loss: Tensor,
    params: Optional[Iterable[Tensor]] = None,
    check_finite: bool = True,
) -> None:
    """Propagate d(loss)/d(tensor) through the tape.

    ``loss`` must be a scalar tensor reachable from the tape (or itself a
    leaf).  After the call every watched leaf that the loss depends on has
    ``.grad`` assigned; leaves listed in ``params`` but unreachable from the
    loss get an explicit zero gradient.  Gradient buffers are fresh arrays
    (or may alias each other for linear pass-through ops) and must be
    treated as read-only by callers.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    if not np.isfinite(loss.data.reshape(())):
        raise NumericsError("loss is non-finite")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    if loss.requires_grad:
        leaves[id(loss)] = loss

    for rec in reversed(tape.ops):
        g_out = grads.pop(id(rec.output), None)
        if g_out is None:
            continue
        want = tuple(tape.watched(t) for t in rec.inputs)
        in_grads = rec.backward_fn(g_out, want)
        for t, ig, w in zip(rec.inputs, in_grads, want):
            if not w or ig is None:
                continue
            acc = grads.get(id(t))
            grads[id(t)] = ig if acc is None else acc + ig
            if t.requires_grad:
                leaves[id(t)] = t

    for tid, t in leaves.items():
        t.grad = grads.get(tid)

    if params is not None:
        for p in params:
            if p.grad is None or id(p) not in leaves:
                p.grad = np.zeros_like(p.data)
            if check_finite and not np.all(np.isfinite(p.grad)):
                name = p.name or "<unnamed>"
                raise NumericsError(f"non-finite gradient for parameter {name}")
    elif check_finite:
        for t in leaves.values():
            if t.grad is not None and not np.all(np.isfinite(t.grad)):
                raise NumericsError(f"non-finite gradient for {t.name or '<unnamed>'}")
