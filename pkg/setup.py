"""Build script: compiles the optional pixel-kernel extension when Cython and a
C compiler are available, otherwise installs the pure-Python package only.
The package selects the compiled backend at import time and falls back
transparently (see tilewarehouse/kernels/__init__.py).
"""

from setuptools import setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/tilewarehouse/kernels/_native.pyx",
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
