import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("PIPESCHED_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "pipesched._kernel",
                    ["src/pipesched/_kernel.pyx"],
                    include_dirs=[np.get_include()],
                    # bit-identical results with the pure-Python kernel need strict IEEE ops
                    extra_compile_args=["-O2", "-ffp-contract=off", "-fno-fast-math"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
