"""CMake-driven build for the attrec._core extension.

The wheel backend here is plain setuptools calling out to CMake (the usual
pybind11 cmake_example arrangement); build with
`pip install -e . --no-build-isolation`.
"""

import os
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name: str, sourcedir: str = "") -> None:
        super().__init__(name, sources=[])
        self.sourcedir = os.fspath(Path(sourcedir).resolve())


class CMakeBuild(build_ext):
    def build_extension(self, ext: CMakeExtension) -> None:
        ext_fullpath = Path.cwd() / self.get_ext_fullpath(ext.name)
        extdir = ext_fullpath.parent.resolve()

        cfg = "Debug" if int(os.environ.get("DEBUG", 0)) else "Release"
        cmake_args = [
            f"-DATTREC_PY_OUTPUT_DIR={extdir}",
            f"-DPython3_EXECUTABLE={sys.executable}",
            f"-DCMAKE_BUILD_TYPE={cfg}",
            "-DATTREC_BUILD_TESTS=OFF",
            "-DATTREC_BUILD_CLI=OFF",
        ]

        build_temp = Path(self.build_temp) / ext.name
        build_temp.mkdir(parents=True, exist_ok=True)

        subprocess.run(
            ["cmake", ext.sourcedir, *cmake_args], cwd=build_temp, check=True
        )
        subprocess.run(
            ["cmake", "--build", ".", "--target", "attrec_pymod", "-j"],
            cwd=build_temp,
            check=True,
        )


setup(
    packages=["attrec"],
    package_dir={"attrec": "python/attrec"},
    ext_modules=[CMakeExtension("attrec._core")],
    cmdclass={"build_ext": CMakeBuild},
)
