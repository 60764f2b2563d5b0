"""Builds the optional compiled kernel; the package works without it."""
import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # no compiler: fall back to the numpy kernel
            print(f"warning: compiled kernel not built ({exc}); using the numpy kernel")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: {ext.name} not built ({exc}); using the numpy kernel")


def extensions():
    if os.environ.get("CAVITYSHAPE_NO_EXT"):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension
    ext = Extension("cavityshape._ckernels", ["src/cavityshape/_ckernels.pyx"],
                    include_dirs=[numpy.get_include()], extra_compile_args=["-O3"])
    return cythonize([ext], compiler_directives={"language_level": "3"}, quiet=True)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
