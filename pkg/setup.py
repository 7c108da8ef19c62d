from setuptools import Extension, setup

import numpy as np

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# The compiled stepping core is optional: the package falls back to the
# pure-numpy kernels if the extension is absent (see xrk/kernels.py).
extensions = [
    Extension(
        "xrk._kernels_c",
        ["src/xrk/_kernels_c.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"})
    if cythonize
    else [],
)
