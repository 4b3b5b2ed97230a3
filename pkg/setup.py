import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # the package still works on the pure-Python kernels
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("LAGSEARCH_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "lagsearch._dtw_core",
                sources=["src/lagsearch/_dtw_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
