"""Independent reference implementations used as test oracles.

Deliberately naive (nested loops, BFS) and written against the operation
definitions only -- they share no code with the implementations they check.
"""

from __future__ import annotations

from collections import deque

import numpy as np


def conv3d_direct(x: np.ndarray, k: np.ndarray, stride: int, pad: int) -> np.ndarray:
    """Direct-summation 3D cross-correlation."""
    n, c, d, h, w = x.shape
    f, _, kd, kh, kw = k.shape
    do = (d + 2 * pad - kd) // stride + 1
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((n, f, do, ho, wo))
    for bn in range(n):
        for bf in range(f):
            for od in range(do):
                for oh in range(ho):
                    for ow in range(wo):
                        acc = 0.0
                        for bc in range(c):
                            for i in range(kd):
                                for j in range(kh):
                                    for m in range(kw):
                                        zd = od * stride - pad + i
                                        zh = oh * stride - pad + j
                                        zw = ow * stride - pad + m
                                        if 0 <= zd < d and 0 <= zh < h and 0 <= zw < w:
                                            acc += x[bn, bc, zd, zh, zw] * k[bf, bc, i, j, m]
                        out[bn, bf, od, oh, ow] = acc
    return out


def conv_transpose3d_scatter(x: np.ndarray, k: np.ndarray, stride: int, pad: int) -> np.ndarray:
    """Scatter-add transposed convolution (adjoint of conv3d_direct)."""
    n, f, d, h, w = x.shape
    _, c, kd, kh, kw = k.shape
    qd = (d - 1) * stride - 2 * pad + kd
    qh = (h - 1) * stride - 2 * pad + kh
    qw = (w - 1) * stride - 2 * pad + kw
    out = np.zeros((n, c, qd, qh, qw))
    for bn in range(n):
        for bf in range(f):
            for od in range(d):
                for oh in range(h):
                    for ow in range(w):
                        val = x[bn, bf, od, oh, ow]
                        for bc in range(c):
                            for i in range(kd):
                                for j in range(kh):
                                    for m in range(kw):
                                        zd = od * stride - pad + i
                                        zh = oh * stride - pad + j
                                        zw = ow * stride - pad + m
                                        if 0 <= zd < qd and 0 <= zh < qh and 0 <= zw < qw:
                                            out[bn, bc, zd, zh, zw] += val * k[bf, bc, i, j, m]
    return out


def numerical_gradient(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central finite differences of scalar-valued f() w.r.t. x, perturbing
    x in place one element at a time."""
    grad = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_g = grad.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        f_plus = f()
        flat_x[i] = orig - h
        f_minus = f()
        flat_x[i] = orig
        flat_g[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def assert_gradients_match(analytic, numeric, rtol=1e-4, atol=1e-6, label=""):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    assert analytic.shape == numeric.shape, f"{label}: shape {analytic.shape} vs {numeric.shape}"
    err = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    ok = (err <= atol) | (err <= rtol * scale)
    if not ok.all():
        worst = np.unravel_index(np.argmax(err - rtol * scale), err.shape)
        raise AssertionError(
            f"{label}: gradient mismatch at {worst}: "
            f"analytic={analytic[worst]:.8g} numeric={numeric[worst]:.8g}"
        )


_NEIGHBOR_OFFSETS = {
    conn: [
        (dx, dy, dz)
        for dx in (-1, 0, 1)
        for dy in (-1, 0, 1)
        for dz in (-1, 0, 1)
        if (dx, dy, dz) != (0, 0, 0)
        and (abs(dx) + abs(dy) + abs(dz)) <= {6: 1, 18: 2, 26: 3}[conn]
    ]
    for conn in (6, 18, 26)
}


def flood_fill_components(occ: np.ndarray, connectivity: int = 26) -> list[set]:
    """BFS connected components of a boolean 3D array; list of cell-index sets."""
    offsets = _NEIGHBOR_OFFSETS[connectivity]
    seen = np.zeros_like(occ, dtype=bool)
    comps = []
    dims = occ.shape
    for start in zip(*np.nonzero(occ)):
        if seen[start]:
            continue
        comp = set()
        queue = deque([start])
        seen[start] = True
        while queue:
            cell = queue.popleft()
            comp.add(cell)
            for off in offsets:
                nb = (cell[0] + off[0], cell[1] + off[1], cell[2] + off[2])
                if all(0 <= nb[i] < dims[i] for i in range(3)):
                    if occ[nb] and not seen[nb]:
                        seen[nb] = True
                        queue.append(nb)
        comps.append(comp)
    return comps
