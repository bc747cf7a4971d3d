"""Build script: compiles the optional speedup extension.

The package works without the extension (a pure-Python twin is selected at
import time); set GRAINLEDGER_PURE=1 to skip compilation entirely.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("GRAINLEDGER_PURE") != "1":
    pyx = os.path.join("src", "grainledger", "_kernels", "_speedups.pyx")
    c_src = os.path.join("src", "grainledger", "_kernels", "_speedups.c")
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("grainledger._kernels._speedups", [pyx])],
            language_level=3,
        )
    except ImportError:
        if os.path.exists(c_src):
            ext_modules = [Extension("grainledger._kernels._speedups", [c_src])]

setup(ext_modules=ext_modules)
