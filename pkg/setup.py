import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    USE_CYTHON = True
except ImportError:
    USE_CYTHON = False

# FMLSMR_NO_EXT=1 builds the pure-Python package only.
BUILD_EXT = os.environ.get("FMLSMR_NO_EXT", "") != "1"

extensions = []
if BUILD_EXT and USE_CYTHON:
    extensions = cythonize(
        [
            Extension(
                "fmlsmr._ckernels",
                ["src/fmlsmr/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # no -ffast-math / -march=native: kernels must stay bitwise
                # reproducible against the NumPy fallback
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=extensions)
