"""
Setup script for backward compatibility.

Modern Python packaging uses pyproject.toml, but this file is provided
for compatibility with older tools and workflows.
"""

from setuptools import setup, find_packages

# Read version from package
with open("cfpp/__init__.py", "r") as f:
    for line in f:
        if line.startswith("__version__"):
            version = line.split("=")[1].strip().strip('"').strip("'")
            break

# Read long description from README
try:
    with open("README.md", "r", encoding="utf-8") as f:
        long_description = f.read()
except FileNotFoundError:
    long_description = "Tailgated vs gapped car-following analysis and adversarial reward learning"

setup(
    name="cfpp",
    version=version,
    description="Tailgated vs gapped car-following analysis and adversarial reward learning on highD-format trajectories",
    long_description=long_description,
    long_description_content_type="text/markdown",
    author="cfpp developers",
    python_requires=">=3.9",
    packages=find_packages(include=["cfpp", "cfpp.*"]),
    install_requires=[
        "pydantic>=2.0",
        "numpy>=1.22",
        "pandas>=1.5",
        "scipy>=1.9",
    ],
    extras_require={
        "dev": [
            "pytest>=7.0",
            "hypothesis>=6.0",
            "pytest-cov>=4.0",
            "mpmath>=1.2",
        ],
    },
    entry_points={"console_scripts": ["cfpp=cfpp.cli:main"]},
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Topic :: Scientific/Engineering",
    ],
    keywords="car-following highd inverse-reinforcement-learning dtw traffic-safety",
)
