"""Build script: compiles the optional Cython kernel extension.

The extension is a pure speedup; if Cython or a C compiler is missing the
install falls back to the NumPy implementation of the same kernels.
"""

import warnings

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the extension if possible, warn and continue if not."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, broken toolchain, ...
            warnings.warn(
                "poseforge: native kernel build failed (%s); "
                "installing with the NumPy backend only" % (exc,)
            )

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(
                "poseforge: building %s failed (%s); the NumPy backend "
                "will be used instead" % (ext.name, exc)
            )


def make_extensions():
    import os

    if not os.path.exists("src/poseforge/_kernels/native.pyx"):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError as exc:
        warnings.warn("poseforge: %s; skipping native kernels" % (exc,))
        return []
    ext = Extension(
        "poseforge._kernels.native",
        sources=["src/poseforge/_kernels/native.pyx"],
        include_dirs=[numpy.get_include()],
        # fp-contract off: the test suite pins bit-agreement with the NumPy
        # backend, which fused multiply-adds would break
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level="3")


setup(ext_modules=make_extensions(), cmdclass={"build_ext": OptionalBuildExt})
