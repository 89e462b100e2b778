"""Builds the `skillrl._core` extension straight from the C++ sources.

The extension embeds the whole core library, so `pip install -e .` needs
nothing beyond a C++20 compiler, Eigen headers and pybind11 (set
EIGEN3_INCLUDE_DIR if Eigen lives somewhere unusual).
"""

import os
from glob import glob

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

eigen_include = os.environ.get("EIGEN3_INCLUDE_DIR", "/usr/include/eigen3")

ext = Pybind11Extension(
    "skillrl._core",
    sorted(glob("src/*.cpp")) + ["python/bindings.cpp"],
    include_dirs=["include", "vendor", eigen_include],
    cxx_std=20,
    extra_compile_args=["-O3"],
)

setup(
    ext_modules=[ext],
    cmdclass={"build_ext": build_ext},
    packages=["skillrl"],
    package_dir={"skillrl": "python/skillrl"},
)
