"""Build script for the optional compiled kernels.

The Cython extension is best-effort: if Cython or a C compiler is missing the
package still installs and ``artifact.kernels`` falls back to pure Python.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("ARTIFACT_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext = Extension(
            "artifact.kernels._core",
            ["src/artifact/kernels/_core.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
        ext_modules = cythonize(
            [ext],
            language_level=3,
            compiler_directives={
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
