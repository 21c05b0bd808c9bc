"""Build the optional compiled kernels; the pure-Python fallback covers failures."""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing or failing
            print(f"warning: compiled kernels not built ({exc}); using the numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: could not build {ext.name} ({exc}); using the numpy fallback")


def extensions():
    if os.environ.get("VIRTCOLOR_NO_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension
    common = dict(include_dirs=[np.get_include()], extra_compile_args=["-O3"],
                  define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])
    exts = [Extension("virtcolor.sketches._kernels", ["src/virtcolor/sketches/_kernels.pyx"], **common),
            Extension("virtcolor._netkern", ["src/virtcolor/_netkern.pyx"], **common)]
    return cythonize(exts, compiler_directives={"language_level": "3"}, quiet=True)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
