"""Build script: compiles the optional C decoder core.

The package is fully functional without the extension (a pure NumPy/Python
backend is selected at import time); the extension accelerates the Monte
Carlo trial loops by 1-2 orders of magnitude. If no compiler or Cython is
available the build degrades to pure-Python silently.
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
                "sparsync._ckernels",
                ["src/sparsync/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError as exc:  # pragma: no cover - environment dependent
    sys.stderr.write(f"sparsync: building without C core ({exc})\n")

setup(ext_modules=ext_modules)
