import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; the fallback kernels are used
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("IPSLAB_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "ipslab._kernels",
                ["src/ipslab/_kernels.pyx"],
                include_dirs=[np.get_include()],
                # no -ffast-math / FMA contraction: results must match the
                # pure-Python fallback bit for bit
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
