"""Build script for the optional compiled evolution kernel.

The package works without the extension (a numpy fallback is selected at
import time); the build therefore tolerates a missing compiler or Cython.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "noisefold._evolve",
                ["src/noisefold/_evolve.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
