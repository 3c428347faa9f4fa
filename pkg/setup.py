"""Setup configuration for sonar-histnet."""

from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="sonar-histnet",
    version="0.1.0",
    description="Passive-sonar vessel classification with histogram-layer time delay neural networks",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(include=["sonar_histnet", "sonar_histnet.*"]),
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.9",
        "soundfile>=0.12",
        "pydantic>=2.7",
    ],
    extras_require={
        "dev": ["pytest>=7.0.0"],
    },
    entry_points={"console_scripts": ["sonar-histnet=sonar_histnet.cli:main"]},
)
