from setuptools import find_packages, setup

with open("requirements.txt") as f:
    requirements = [line.strip() for line in f if line.strip() and line.strip() != "pytest"]

setup(
    name="cosgauss-frontend",
    version="0.1.0",
    description="Learnable cosine-modulated Gaussian filterbank with relevance weighting for audio classification",
    packages=find_packages(include=["cosgauss_frontend", "cosgauss_frontend.*"]),
    python_requires=">=3.10",
    install_requires=requirements,
    extras_require={"test": ["pytest"]},
    entry_points={"console_scripts": ["cosgauss=cosgauss_frontend.cli:main"]},
)
