from setuptools import Extension, setup

import numpy

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = [
    Extension(
        "latvar.recorder._engine_cy",
        ["src/latvar/recorder/_engine_cy.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

if cythonize is not None:
    extensions = cythonize(extensions, compiler_directives={"language_level": "3"})
else:
    # No Cython: ship pure Python only; the package falls back at import time.
    extensions = []

setup(ext_modules=extensions)
