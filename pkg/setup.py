"""Build the optional Cython kernels.

Without Cython (or a C compiler) the package still installs and runs on the
pure-Python kernels in ``hterqe._kernels_py``.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "hterqe._kernels",
                ["src/hterqe/_kernels.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
