"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a numpy/scipy fallback is selected
at import time); building it just makes cluster labeling and the random-walk
capacity estimator much faster.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - build still works, ext skipped
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "gffperc.kernels._core",
                ["src/gffperc/kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
