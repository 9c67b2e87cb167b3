#!/usr/bin/env python

import io
import os
import re

from setuptools import find_packages, setup


with io.open("hardproj/version.py", "rt", encoding="utf-8") as f:
    version = re.search(r'__version__ = "(.*?)"', f.read()).group(1)


def read(filename):
    """Read file contents."""
    return open(os.path.join(os.path.dirname(__file__), filename)).read()


setup(
    name="hardproj",
    version=version,
    description=(
        "Neural network surrogates with hard linear and separable nonlinear "
        "equality constraints enforced by KKT projection layers"
    ),
    long_description=read("README.md"),
    long_description_content_type="text/markdown",
    license="MIT",
    python_requires=">=3.8",
    install_requires=[
        "numpy>=1.17.0",
        "scipy>=1.6.0",
    ],
    entry_points={
        "console_scripts": [
            "hardproj=hardproj.cli:main",
        ],
    },
    zip_safe=False,
    packages=find_packages(exclude=["docs", "tests", "examples"]),
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Environment :: Console",
        "Operating System :: POSIX :: Linux",
        "Intended Audience :: Science/Research",
        "Natural Language :: English",
        "Topic :: Scientific/Engineering",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
)
