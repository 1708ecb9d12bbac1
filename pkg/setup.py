import os

from setuptools import setup

ext_modules = []
if os.environ.get("HFBANDIT_NO_EXT", "") in ("", "0"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools.extension import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "hfbandit._core",
                    ["src/hfbandit/_core.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        # no Cython/numpy at build time: ship the pure-python fallback only
        ext_modules = []

setup(ext_modules=ext_modules)
