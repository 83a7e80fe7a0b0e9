"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so a failed or skipped extension build is not fatal.
"""

import numpy
from setuptools import setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/cavitiga/_kernels/_core.pyx"],
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": "3",
        },
    )
except ImportError:
    ext_modules = []

setup(
    ext_modules=ext_modules,
    include_dirs=[numpy.get_include()],
)
