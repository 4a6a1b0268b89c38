# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled 3D convolution kernels.

Same im2col + GEMM algorithm as the numpy backend, but the gather/scatter
loops run in single-threaded C and the contraction calls BLAS dgemm
directly, skipping the python-level transpose/copy round trips.  That
overhead dominates small-batch calls, so this backend is the low-latency
path for interactive snapping; parallelism comes from the BLAS pool alone
(a second OpenMP pool of our own just thrashes it).

Same call signatures as ``voxsnap.kernels.numpy_backend``.
"""

import numpy as np

from scipy.linalg.cython_blas cimport dgemm


cdef inline Py_ssize_t ceildiv(Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    if a >= 0:
        return (a + b - 1) // b
    return -((-a) // b)


cdef inline Py_ssize_t clamp0(Py_ssize_t a) noexcept nogil:
    return a if a > 0 else 0


cdef void _fill_cols(double[:, :, :, :, ::1] x, Py_ssize_t kd, Py_ssize_t kh,
                     Py_ssize_t kw, Py_ssize_t stride, Py_ssize_t pad,
                     Py_ssize_t do, Py_ssize_t ho, Py_ssize_t wo,
                     double[:, ::1] cols) noexcept:
    """im2col into a (K, M) = (c*k^3, n*do*ho*wo) row-major buffer
    (pre-zeroed: out-of-bounds window cells stay zero)."""
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t d = x.shape[2], h = x.shape[3], w = x.shape[4]
    cdef Py_ssize_t bn, bc, i, j, m, od, oh, ow
    cdef Py_ssize_t od0, od1, oh0, oh1, ow0, ow1, zd, zh, zw0, col, row
    for bn in range(n):
        for bc in range(c):
            for i in range(kd):
                od0 = clamp0(ceildiv(pad - i, stride))
                od1 = min(do, ceildiv(d + pad - i, stride))
                for j in range(kh):
                    oh0 = clamp0(ceildiv(pad - j, stride))
                    oh1 = min(ho, ceildiv(h + pad - j, stride))
                    for m in range(kw):
                        ow0 = clamp0(ceildiv(pad - m, stride))
                        ow1 = min(wo, ceildiv(w + pad - m, stride))
                        col = ((bc * kd + i) * kh + j) * kw + m
                        zw0 = ow0 * stride - pad + m
                        for od in range(od0, od1):
                            zd = od * stride - pad + i
                            for oh in range(oh0, oh1):
                                zh = oh * stride - pad + j
                                row = ((bn * do + od) * ho + oh) * wo
                                for ow in range(ow0, ow1):
                                    cols[col, row + ow] = x[
                                        bn, bc, zd, zh, zw0 + (ow - ow0) * stride]


cdef void _gemm(char ta, char tb, int m, int n, int k,
                double* a, int lda, double* b, int ldb, double* c, int ldc) noexcept nogil:
    cdef double one = 1.0, zero = 0.0
    dgemm(&ta, &tb, &m, &n, &k, &one, a, &lda, b, &ldb, &zero, c, &ldc)


def conv3d_forward(x, k, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t d = x.shape[2], h = x.shape[3], w = x.shape[4]
    cdef Py_ssize_t f = k.shape[0], kd = k.shape[2], kh = k.shape[3], kw = k.shape[4]
    if k.shape[1] != c:
        raise ValueError(f"channel mismatch: input has {c}, kernel expects {k.shape[1]}")
    cdef Py_ssize_t do = (d + 2 * pad - kd) // stride + 1
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - kw) // stride + 1
    if min(do, ho, wo) < 1:
        raise ValueError("kernel larger than padded input")

    cdef Py_ssize_t mm = n * do * ho * wo, kk = c * kd * kh * kw
    cols_arr = np.zeros((kk, mm))
    _fill_cols(x, kd, kh, kw, stride, pad, do, ho, wo, cols_arr)
    # row-major cols (K,M) is column-major (M,K); kernel (F,K) is col-major
    # (K,F): Y_colmajor(M,F) = cols(M,K) @ W(K,F), i.e. Y row-major (F,M)
    y_fm = np.empty((f, mm))
    cdef double[:, ::1] colsv = cols_arr, wv = k.reshape(f, kk), yv = y_fm
    _gemm(b'N', b'N', <int>mm, <int>f, <int>kk,
          &colsv[0, 0], <int>mm, &wv[0, 0], <int>kk, &yv[0, 0], <int>mm)
    out = np.empty((n, f, do, ho, wo))
    _rows_to_batch(y_fm, out)
    return out


cdef void _rows_to_batch(double[:, ::1] y_fm, double[:, :, :, :, ::1] out) noexcept:
    """(F, n*spatial) rows into (n, F, spatial) layout."""
    cdef Py_ssize_t n = out.shape[0], f = out.shape[1]
    cdef Py_ssize_t sp = out.shape[2] * out.shape[3] * out.shape[4]
    cdef Py_ssize_t bn, bf, s
    cdef double[:, :, ::1] flat = <double[:n, :f, :sp]> &out[0, 0, 0, 0, 0]
    for bn in range(n):
        for bf in range(f):
            for s in range(sp):
                flat[bn, bf, s] = y_fm[bf, bn * sp + s]


cdef void _batch_to_rows(double[:, :, :, :, ::1] x, double[:, ::1] x_fm) noexcept:
    """(n, F, spatial) layout into (F, n*spatial) rows."""
    cdef Py_ssize_t n = x.shape[0], f = x.shape[1]
    cdef Py_ssize_t sp = x.shape[2] * x.shape[3] * x.shape[4]
    cdef Py_ssize_t bn, bf, s
    cdef double[:, :, ::1] flat = <double[:n, :f, :sp]> &x[0, 0, 0, 0, 0]
    for bn in range(n):
        for bf in range(f):
            for s in range(sp):
                x_fm[bf, bn * sp + s] = flat[bn, bf, s]


def conv3d_kernel_grad(x, dy, kshape, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t f = dy.shape[1], do = dy.shape[2], ho = dy.shape[3], wo = dy.shape[4]
    cdef Py_ssize_t kd = kshape[2], kh = kshape[3], kw = kshape[4]
    cdef Py_ssize_t mm = n * do * ho * wo, kk = c * kd * kh * kw

    cols_arr = np.zeros((kk, mm))
    _fill_cols(x, kd, kh, kw, stride, pad, do, ho, wo, cols_arr)
    dy_fm = np.empty((f, mm))
    _batch_to_rows(dy, dy_fm)
    # dK row-major (F,K) is col-major (K,F) = cols(M,K)^T @ dy_colmajor(M,F)
    dk = np.empty(kshape)
    cdef double[:, ::1] colsv = cols_arr, dyv = dy_fm
    cdef double[:, :, :, :, ::1] dkv = dk
    _gemm(b'T', b'N', <int>kk, <int>f, <int>mm,
          &colsv[0, 0], <int>mm, &dyv[0, 0], <int>mm, &dkv[0, 0, 0, 0, 0], <int>kk)
    return dk


def conv_transpose3d_forward(x, k, int stride, int pad, out_spatial=None):
    cdef Py_ssize_t n = x.shape[0], f = x.shape[1]
    cdef Py_ssize_t d = x.shape[2], h = x.shape[3], w = x.shape[4]
    cdef Py_ssize_t c = k.shape[1], kd = k.shape[2], kh = k.shape[3], kw = k.shape[4]
    if k.shape[0] != f:
        raise ValueError(f"channel mismatch: input has {f}, kernel expects {k.shape[0]}")
    cdef Py_ssize_t qd, qh, qw
    if out_spatial is None:
        qd = (d - 1) * stride - 2 * pad + kd
        qh = (h - 1) * stride - 2 * pad + kh
        qw = (w - 1) * stride - 2 * pad + kw
    else:
        # explicit extent: exact adjoint of a conv3d whose input had this size
        qd, qh, qw = out_spatial
    if min(qd, qh, qw) < 1:
        raise ValueError("empty transposed-conv output")

    cdef Py_ssize_t mm = n * d * h * w, kk = c * kd * kh * kw
    x_fm = np.empty((f, mm))
    _batch_to_rows(x, x_fm)
    # cols row-major (K,M) is col-major (M,K) = x_colmajor(M,F) @ W(K,F)^T
    cols_arr = np.empty((kk, mm))
    cdef double[:, ::1] xv = x_fm, wv = k.reshape(f, kk), colsv = cols_arr
    _gemm(b'N', b'T', <int>mm, <int>kk, <int>f,
          &xv[0, 0], <int>mm, &wv[0, 0], <int>kk, &colsv[0, 0], <int>mm)
    out = np.zeros((n, c, qd, qh, qw))
    _col2im_add(cols_arr, kd, kh, kw, stride, pad, d, h, w, out)
    return out


cdef void _col2im_add(double[:, ::1] cols, Py_ssize_t kd, Py_ssize_t kh,
                      Py_ssize_t kw, Py_ssize_t stride, Py_ssize_t pad,
                      Py_ssize_t d, Py_ssize_t h, Py_ssize_t w,
                      double[:, :, :, :, ::1] out) noexcept:
    """Scatter-add the (K, n*d*h*w) product matrix into the output volume."""
    cdef Py_ssize_t n = out.shape[0], c = out.shape[1]
    cdef Py_ssize_t qd = out.shape[2], qh = out.shape[3], qw = out.shape[4]
    cdef Py_ssize_t bn, bc, i, j, m, od, oh, ow
    cdef Py_ssize_t od0, od1, oh0, oh1, ow0, ow1, zd, zh, zw0, col, row
    for bn in range(n):
        for bc in range(c):
            for i in range(kd):
                od0 = clamp0(ceildiv(pad - i, stride))
                od1 = min(d, ceildiv(qd + pad - i, stride))
                for j in range(kh):
                    oh0 = clamp0(ceildiv(pad - j, stride))
                    oh1 = min(h, ceildiv(qh + pad - j, stride))
                    for m in range(kw):
                        ow0 = clamp0(ceildiv(pad - m, stride))
                        ow1 = min(w, ceildiv(qw + pad - m, stride))
                        col = ((bc * kd + i) * kh + j) * kw + m
                        zw0 = ow0 * stride - pad + m
                        for od in range(od0, od1):
                            zd = od * stride - pad + i
                            for oh in range(oh0, oh1):
                                zh = oh * stride - pad + j
                                row = ((bn * d + od) * h + oh) * w
                                for ow in range(ow0, ow1):
                                    out[bn, bc, zd, zh, zw0 + (ow - ow0) * stride] += (
                                        cols[col, row + ow])
