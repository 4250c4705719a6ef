#!/usr/bin/env python3
"""Setup script for scenemc."""

from setuptools import setup, find_packages

# Read the README file
with open("readme.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

# Read requirements, leaving test tools to the extra
with open("requirements.txt", "r", encoding="utf-8") as fh:
    requirements = [line.strip() for line in fh
                    if line.strip() and not line.startswith("#")
                    and not line.startswith(("pytest", "hypothesis"))]

setup(
    name="scenemc",
    version="0.1.0",
    author="scenemc Team",
    description="Holistic 3D indoor scene and human pose reconstruction from one image by MCMC",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(include=["scenemc", "scenemc.*"]),
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
    python_requires=">=3.9",
    install_requires=requirements,
    extras_require={"test": ["pytest>=7.0", "hypothesis>=6.0"]},
    entry_points={
        "console_scripts": [
            "scenemc=scenemc.cli.main:app",
        ],
    },
    include_package_data=True,
    zip_safe=False,
)
