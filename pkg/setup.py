from setuptools import find_packages, setup

setup(
    name="koopman_qlearning",
    packages=find_packages(),
    version="1.0.0",
    description="Output-feedback Q-learning with a Koopman linear embedding",
    license="MIT License",
    python_requires=">=3.9",
    install_requires=[
        "Click",
        "dynaconf",
        "numpy",
        "scipy",
        "pyarrow",
    ],
    entry_points={
        "console_scripts": [
            "kql = src.cli.kql:main",
        ],
    },
)
