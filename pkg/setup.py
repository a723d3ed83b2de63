"""Build script: compiles the optional kernel extension when the toolchain allows.

Set DEMORET_NO_EXT=1 to force a pure-Python install; the package falls back to
its numpy kernels at import time when the extension is absent.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("DEMORET_NO_EXT") != "1" and os.path.exists("src/demoret/nn/_kernels.pyx"):
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "demoret.nn._kernels",
                    sources=["src/demoret/nn/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        # No Cython / numpy at build time: install without the extension.
        ext_modules = []

setup(ext_modules=ext_modules)
