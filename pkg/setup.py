"""Build the optional compiled kernel extension.

The package works without it: aptensemble.kernels falls back to the numpy
implementation when the extension is missing or fails to build.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "aptensemble.kernels._dense",
                ["src/aptensemble/kernels/_dense.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
