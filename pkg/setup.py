"""Build script for the optional compiled integrator.

If Cython or a C compiler is missing, the package still installs and falls
back to the numpy integrator at import time.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("STOCH_CONSENSUS_NO_EXT"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "stoch_consensus._ckernel",
                    ["src/stoch_consensus/_ckernel.pyx"],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
        for ext in ext_modules:
            ext.optional = True
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
