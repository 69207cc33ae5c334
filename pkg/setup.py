"""Build script for the compiled kernel extension.

The package works without the extension (the numpy fallback backend is
selected at import), so a failed build here only costs speed.
"""

from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension(
        "stressformer.kernels._core",
        sources=["src/stressformer/kernels/_core.pyx"],
        extra_compile_args=["-O3", "-funroll-loops"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        language_level=3,
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
)
