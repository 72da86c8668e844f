"""Build script for the optional compiled training kernel.

The package is pure Python by default; if Cython and a C compiler are
available, the skip-gram training loop is compiled for a large speedup.
Installation must not fail on machines without a toolchain, so any build
problem just skips the extension and the numpy fallback is used instead.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "pseudobox._kernels._sgns",
                sources=["src/pseudobox/_kernels/_sgns.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - toolchain-dependent
    print(f"pseudobox: building without compiled kernel ({exc})")

setup(ext_modules=ext_modules)
