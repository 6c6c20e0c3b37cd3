"""Build script: compiles the Cython hot kernels when a toolchain is present.

The compiled extension is optional. If compilation fails (no compiler, no
Cython), the package installs anyway and falls back to the pure-Python
kernels in pegmfg._pure at import time.
"""

import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext
from setuptools.errors import CCompilerError, ExecError, PlatformError


class optional_build_ext(build_ext):
    """build_ext that downgrades compiler failures to a warning."""

    def run(self):
        try:
            super().run()
        except (PlatformError, FileNotFoundError) as exc:
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except (CCompilerError, ExecError, PlatformError, ValueError) as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        sys.stderr.write(
            f"WARNING: building pegmfg._kernels failed ({exc}); "
            "installing with the pure-Python kernels only.\n"
        )


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        sys.stderr.write(f"WARNING: {exc}; skipping compiled kernels.\n")
        return []
    return cythonize(
        "src/pegmfg/_kernels.pyx",
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    ), [numpy.get_include()]


ext_modules, include_dirs = (extensions() or ([], []))

setup(
    ext_modules=ext_modules,
    include_dirs=include_dirs,
    cmdclass={"build_ext": optional_build_ext},
)
