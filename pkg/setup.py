"""Build the optional compiled kernel; the package falls back to the pure
numpy path when the extension is unavailable."""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "graphcondense._ckernels",
        ["src/graphcondense/_ckernels.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
    ),
]

setup(ext_modules=cythonize(extensions, language_level=3))
