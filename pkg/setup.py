"""Setup script for BeaconPlacer package"""
from setuptools import setup, find_packages
import os

# Read version from __version__.py
version = {}
with open(os.path.join("beacon_placer", "__version__.py")) as f:
    exec(f.read(), version)

# Read requirements
with open("requirements.txt") as f:
    requirements = [line.split("#")[0].strip() for line in f
                    if line.strip() and not line.startswith("#") and "pytest" not in line]

# Read README
with open("README.md", encoding="utf-8") as f:
    long_description = f.read()

setup(
    name="beaconplacer",
    version=version["__version__"],
    author=version["__author__"],
    description=version["__description__"],
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests"]),
    python_requires=">=3.9",
    install_requires=requirements,
    extras_require={"test": ["pytest>=6.0.0"]},
    entry_points={
        "console_scripts": [
            "beaconplacer=beacon_placer.__main__:main",
        ],
    },
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
    ],
)
