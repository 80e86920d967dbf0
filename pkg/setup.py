"""Builds the optional compiled scoring kernel.

The package works without it; `histner._kernels` falls back to a pure-Python
implementation when the extension is missing.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "histner._kernels._overlap",
                ["src/histner/_kernels/_overlap.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
