import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SOLVSEARCH_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "solvsearch.ratio._ratio_kernel",
                    ["src/solvsearch/ratio/_ratio_kernel.pyx"],
                    optional=True,
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except ImportError:
        # No Cython at build time: install pure-Python only, the kernel
        # selector falls back at import.
        ext_modules = []

setup(ext_modules=ext_modules)
