import os
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    # A failed compile must not break installation: the package falls back
    # to the pure-Python core (keynetsim._core_py) at import time.
    def run(self):
        try:
            super().run()
        except Exception as exc:
            print("warning: compiled core skipped (%s); pure-Python core will be used" % exc,
                  file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print("warning: building %s failed (%s); pure-Python core will be used"
                  % (ext.name, exc), file=sys.stderr)


ext_modules = []
if os.path.exists("src/keynetsim/_core.pyx"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("keynetsim._core", ["src/keynetsim/_core.pyx"])],
            language_level=3,
        )
    except ImportError:
        pass

setup(
    ext_modules=ext_modules,
    cmdclass={"build_ext": optional_build_ext},
)
