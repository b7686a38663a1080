"""Build script: compiles the optional convolution kernel extension.

The package works without the extension (a numpy fallback is selected at
import time); the build degrades gracefully when Cython or a C compiler
is unavailable.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "edgemap.nn._convkernels",
                ["src/edgemap/nn/_convkernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
