import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("ARMPG_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "armpg._ckernels",
                    ["src/armpg/_ckernels.pyx"],
                    extra_compile_args=["-O3", "-ffp-contract=off", "-fno-builtin-sin", "-fno-builtin-cos"],
                )
            ],
            language_level="3",
        )

setup(ext_modules=ext_modules)
