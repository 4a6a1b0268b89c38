"""Pure-numpy 3D convolution kernels.

Backend strategy: materialize the im2col window matrix once per call and
hand the whole contraction to BLAS as a single GEMM.  Peak scratch is
(batch * out_spatial) x (C * k^3) doubles, well under 100 MB for the
network shapes this package builds, and throughput is BLAS-bound.

All three entry points share conventions:

* volumes are ``(N, C, D, H, W)`` float64, C-contiguous
* kernels are ``(F, C, k, k, k)``: ``conv3d_forward`` maps C -> F channels,
  ``conv_transpose3d_forward`` is its exact adjoint and maps F -> C.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


def _pad(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad), (pad, pad)))


def _window_cols(xp: np.ndarray, kd: int, kh: int, kw: int, stride: int, out_sp: tuple):
    """im2col: (N*Do*Ho*Wo, C*k^3) copy of the sliding windows."""
    n, c = xp.shape[:2]
    do, ho, wo = out_sp
    sn, sc, sd, sh, sw = xp.strides
    win = as_strided(
        xp,
        shape=(n, c, do, ho, wo, kd, kh, kw),
        strides=(sn, sc, sd * stride, sh * stride, sw * stride, sd, sh, sw),
        writeable=False,
    )
    return win.transpose(0, 2, 3, 4, 1, 5, 6, 7).reshape(n * do * ho * wo, c * kd * kh * kw)


def conv3d_forward(x: np.ndarray, k: np.ndarray, stride: int, pad: int) -> np.ndarray:
    n, c, d, h, w = x.shape
    f, ck, kd, kh, kw = k.shape
    if ck != c:
        raise ValueError(f"channel mismatch: input has {c}, kernel expects {ck}")
    do = (d + 2 * pad - kd) // stride + 1
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    if min(do, ho, wo) < 1:
        raise ValueError("kernel larger than padded input")
    cols = _window_cols(_pad(x, pad), kd, kh, kw, stride, (do, ho, wo))
    y = cols @ k.reshape(f, -1).T
    return np.ascontiguousarray(y.reshape(n, do, ho, wo, f).transpose(0, 4, 1, 2, 3))


def conv3d_kernel_grad(
    x: np.ndarray, dy: np.ndarray, kshape: tuple, stride: int, pad: int
) -> np.ndarray:
    n = x.shape[0]
    f, do, ho, wo = dy.shape[1:]
    kd, kh, kw = kshape[2:]
    cols = _window_cols(_pad(x, pad), kd, kh, kw, stride, (do, ho, wo))
    dy_mat = dy.transpose(0, 2, 3, 4, 1).reshape(n * do * ho * wo, f)
    return (dy_mat.T @ cols).reshape(kshape)


def conv_transpose3d_forward(
    x: np.ndarray, k: np.ndarray, stride: int, pad: int, out_spatial: tuple | None = None
) -> np.ndarray:
    n, f, d, h, w = x.shape
    fk, c, kd, kh, kw = k.shape
    if fk != f:
        raise ValueError(f"channel mismatch: input has {f}, kernel expects {fk}")
    if out_spatial is None:
        qd = (d - 1) * stride - 2 * pad + kd
        qh = (h - 1) * stride - 2 * pad + kh
        qw = (w - 1) * stride - 2 * pad + kw
    else:
        # explicit extent: exact adjoint of a conv3d whose input had this size
        qd, qh, qw = out_spatial
    if min(qd, qh, qw) < 1:
        raise ValueError("empty transposed-conv output")

    # one GEMM produces every (input position x kernel offset) contribution,
    # then a col2im scatter into a padded workspace (so no range clipping)
    x_mat = x.transpose(0, 2, 3, 4, 1).reshape(n * d * h * w, f)
    cols = (x_mat @ k.reshape(f, -1)).reshape(n, d, h, w, c, kd, kh, kw)
    out = np.zeros((n, c, qd + 2 * pad, qh + 2 * pad, qw + 2 * pad))
    for i in range(kd):
        for j in range(kh):
            for m in range(kw):
                out[
                    :,
                    :,
                    i : i + d * stride : stride,
                    j : j + h * stride : stride,
                    m : m + w * stride : stride,
                ] += cols[:, :, :, :, :, i, j, m].transpose(0, 4, 1, 2, 3)
    if pad == 0:
        return out
    return np.ascontiguousarray(out[:, :, pad : pad + qd, pad : pad + qh, pad : pad + qw])
