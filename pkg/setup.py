"""Build script: compiles the optional accelerator extension.

The compiled kernels are a pure speed-up; if Cython or a C compiler is
missing the install proceeds and the package falls back to the NumPy
implementation at import time.
"""
import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "syncgames._kernels._core",
                ["src/syncgames/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - depends on build host
    sys.stderr.write(f"syncgames: skipping compiled kernels ({exc}); "
                     "NumPy fallback will be used\n")

setup(ext_modules=ext_modules)
