"""Build the optional Cython trajectory kernel.

Set ``DISPERSIVE_SME_NO_EXT=1`` to skip compilation; the package then runs on
its pure-NumPy fallback.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("DISPERSIVE_SME_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "dispersive_sme._kernels",
                    sources=["src/dispersive_sme/_kernels.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
