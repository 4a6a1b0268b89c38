"""Convolution kernel dispatch.

Two interchangeable backends implement the hot kernels (3D convolution, its
adjoint, and the kernel-weight gradient):

* ``compiled`` -- Cython/OpenMP extension ``voxsnap.kernels._conv_cy``
* ``python``   -- numpy/BLAS fallback ``voxsnap.kernels.numpy_backend``

Selection happens once at import: the compiled backend is preferred when it
built successfully.  Override with ``VOXSNAP_KERNELS=python|compiled|auto``.
Both backends produce bit-identical results on the same inputs irrespective
of thread count (see ``benchmarks/bench_kernels.py`` for a speed comparison).
"""

import os

_ENV = "VOXSNAP_KERNELS"


def _load():
    choice = os.environ.get(_ENV, "auto")
    if choice not in {"auto", "compiled", "python"}:
        raise ValueError(f"{_ENV} must be auto|compiled|python, got {choice!r}")
    if choice in ("auto", "compiled"):
        try:
            from voxsnap.kernels import _conv_cy

            return _conv_cy, "compiled"
        except ImportError:
            if choice == "compiled":
                raise
    from voxsnap.kernels import numpy_backend

    return numpy_backend, "python"


_impl, BACKEND = _load()

conv3d_forward = _impl.conv3d_forward
conv_transpose3d_forward = _impl.conv_transpose3d_forward
conv3d_kernel_grad = _impl.conv3d_kernel_grad


def set_num_threads(num: int) -> None:
    """Validate a thread-cap request.  Both backends draw their parallelism
    from the BLAS pool, which only honours OMP_NUM_THREADS /
    OPENBLAS_NUM_THREADS set before the process loads numpy, so this is a
    validation shim rather than a runtime switch."""
    if num < 1:
        raise ValueError("thread count must be >= 1")
