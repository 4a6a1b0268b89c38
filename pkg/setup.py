"""Build script for the compiled convolution kernels.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile is not fatal for development: run
``pip install -e . --no-build-isolation`` normally, or set
``VOXSNAP_SKIP_EXT=1`` to skip the extension build entirely.
"""

import os

from setuptools import Extension, setup

if os.environ.get("VOXSNAP_SKIP_EXT"):
    ext_modules = []
else:
    from Cython.Build import cythonize

    extensions = [
        Extension(
            "voxsnap.kernels._conv_cy",
            ["src/voxsnap/kernels/_conv_cy.pyx"],
            extra_compile_args=["-O3"],
        )
    ]
    ext_modules = cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
