"""Builds the optional Cython kernels; the package works without them."""
from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("msic.kernels._ckernels", ["src/msic/kernels/_ckernels.pyx"],
                   include_dirs=[np.get_include()], extra_compile_args=["-O3"])],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build environment without Cython
    print(f"skipping compiled kernels: {exc}")

setup(ext_modules=ext_modules)
