import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "hpfem._kernels._core",
                ["src/hpfem/_kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # Without Cython the package installs pure-Python; the fallback kernels
    # are selected at import time.
    ext_modules = []

setup(ext_modules=ext_modules)
