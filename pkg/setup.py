"""Build script for the optional compiled stepping kernels.

The package works without the extension (a NumPy fallback is selected at
import time), so a failed compile downgrades to a warning instead of
aborting the install.
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, etc.
            warnings.warn(f"compiled kernels skipped: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"compiled kernels skipped: {exc}")


def make_extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        warnings.warn(f"compiled kernels skipped: {exc}")
        return []
    ext = Extension(
        "trajkit._kernels",
        ["src/trajkit/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        # -ffp-contract=off keeps the C arithmetic bit-identical to the
        # NumPy fallback (no FMA contraction).
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=make_extensions(), cmdclass={"build_ext": optional_build_ext})
