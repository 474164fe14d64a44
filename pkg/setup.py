import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffp-contract=off keeps the compiled event loop bit-identical to the
# pure-Python fallback (no FMA contraction of a*b+c).
extensions = [
    Extension(
        "saginsim._kernel",
        ["src/saginsim/_kernel.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
