import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "v2gcosim._ckernels",
        ["src/v2gcosim/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        # no FP contraction: keeps results bit-identical to the Python fallback
        extra_compile_args=["-O3", "-ffp-contract=off", "-fno-fast-math"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
)
