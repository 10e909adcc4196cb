"""Build script for the optional compiled similarity kernel.

The package is fully functional without the extension: `citegate.kernel`
falls back to the pure-Python twin at import time.  Build in place with

    python setup.py build_ext --inplace

Set CITEGATE_PURE=1 to skip the extension entirely.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("CITEGATE_PURE") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "citegate._simkernel",
                    ["src/citegate/_simkernel.pyx"],
                    # -ffp-contract=off keeps multiply-add ordering identical
                    # to the pure backend so results match bit for bit.
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                    optional=True,
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
