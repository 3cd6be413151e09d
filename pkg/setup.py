from setuptools import setup, find_packages

setup(
    name="attested-fhe",
    version="0.1.0",
    description="Verifiable FHE evaluation with amortized TPM transcript attestation, for PIR and PSI",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    install_requires=[
        "rich>=13.0.0",
        "typer>=0.9.0",
        "pyyaml>=6.0",
        "numpy>=1.24",
        "cryptography>=41.0",
    ],
    extras_require={
        "dev": [
            "pytest>=7.4",
            "hypothesis>=6.80",
        ],
    },
    entry_points={
        "console_scripts": [
            "attested-fhe=cli.main:app",
            "afhe=cli.main:app",
        ],
    },
    python_requires=">=3.9",
)
