"""
BackdoorBench Setup Script
"""

from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as f:
    long_description = f.read()

setup(
    name="backdoorbench",
    version="1.0.0",
    author="Your Name",
    author_email="your.email@example.com",
    description="Temporal-logic backdoors for neural motion planners: attacks, defenses and benchmarks",
    long_description=long_description,
    long_description_content_type="text/markdown",
    url="https://github.com/yourusername/backdoorbench",
    packages=find_packages(exclude=["tests", "tests.*"]),
    py_modules=["benchapp"],
    classifiers=[
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.9",
    install_requires=[
        "pyyaml>=6.0",
        "click>=8.1.7",
        "rich>=13.7.0",
        "numpy>=1.24",
        "scipy>=1.10",
        "torch>=2.0",
        "arpeggio>=2.0",
        "pillow>=10.2.0",
    ],
    extras_require={
        "dev": ["pytest>=7.4.0"],
    },
    entry_points={
        "console_scripts": [
            "backdoorbench=benchapp:main",
        ],
    },
)
