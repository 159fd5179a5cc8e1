"""Build script: compiles the windowed-sum extension core.

The package works without the extension (a pure-numpy fallback is selected
at import time), so compilation failures are tolerated: build with
LODENS_SKIP_EXT=1 to skip the extension entirely.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("LODENS_SKIP_EXT"):
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/lodens/_fastcore.pyx"],
        compiler_directives={"language_level": "3"},
    )
    for ext in ext_modules:
        ext.include_dirs.append(numpy.get_include())
        ext.extra_compile_args = ["-O3"]

setup(ext_modules=ext_modules)
