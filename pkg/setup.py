"""Builds the optional Cython iteration kernels.

The package works without the extension (a NumPy fallback is selected at
import time); building it just removes per-iteration Python overhead in the
solver loops.  Usage: pip install -e . --no-build-isolation
"""
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "nnireg._kernels._loops",
                ["src/nnireg/_kernels/_loops.pyx"],
                # keep elementwise arithmetic bit-stable across compilers
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
