"""Setup configuration for scoredecomp package."""

from setuptools import setup, find_packages

setup(
    name="scoredecomp",
    version="0.1.0",
    description="Proper-loss decompositions, monotone recalibration and resampling inference",
    author="Your Name",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    python_requires=">=3.10",
    install_requires=[
        "numpy>=2.0.0",
        "scipy>=1.13.0",
        "pandas>=2.2.0",
        "python-dotenv>=1.1.1",
        "arize-phoenix-otel>=0.13.0",
        "opentelemetry-api>=1.36.0",
    ],
    extras_require={
        "dev": [
            "pytest>=8.4.1",
        ]
    },
    entry_points={
        "console_scripts": [
            "scoredecomp=scoredecomp.cli:main",
        ]
    },
)
