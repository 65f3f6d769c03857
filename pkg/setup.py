from setuptools import setup, find_packages
import os

setup(
    name="smcibm",
    version="0.1.0",
    description="Spatial Monte Carlo integration estimators and learning loops for pairwise Boltzmann machines.",
    long_description=(open("README.md").read() if os.path.exists("README.md") else "Spatial Monte Carlo integration for Boltzmann machines."),
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests"]),
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.8",
        "networkx>=2.8",
        "tqdm>=4.60",
        "click>=8.2.0",
    ],
    extras_require={
        "dev": ["pytest>=7.0"],
    },
    entry_points={
        "console_scripts": [
            "smcibm=smcibm.cli:main",
        ],
    },
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    python_requires=">=3.10",
)
