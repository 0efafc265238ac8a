#!/usr/bin/env python

from setuptools import setup

VERSION = "0.1.0"

requires = [
    "simplejson==3.19.2",
    "cocore==1.2",
    "numpy==1.26.4",
    "scipy==1.11.4",
]

setup(
    name="chlab",
    version=VERSION,
    license="MIT",
    author="Equinox Fitness",
    packages=[
        "model_core",
        "besov_lab",
        "eulerian_solver",
        "lagrangian_solver",
        "analysis_harness",
        "lab_runner",
    ],
    entry_points={"console_scripts": ["chlab=lab_runner.module:main"]},
    long_description=open("README.rst").read(),
    install_requires=requires,
    python_requires=">=3.9",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Natural Language :: English",
        "Programming Language :: Python",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
)
