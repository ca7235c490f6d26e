import setuptools
from pathlib import Path

ROOT_DIR = Path(__file__).parent.resolve()

long_description = Path(ROOT_DIR, "README.md").read_text()
version = Path(ROOT_DIR, "VERSION").read_text().strip()
requirements = ["numpy>=1.22", "scipy", "scikit-learn", "PyYAML"]

setuptools.setup(
    name="retrodecode",
    version=version,
    description="Retrospective comparison of Kalman and LSTM cursor decoders in a data-driven Grid task simulator",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(include=["retrodecode"]),
    package_data={"retrodecode": ["py.typed"]},
    classifiers=[
        "Programming Language :: Python :: 3",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.8",
    install_requires=requirements,
    extras_require={"test": ["pytest"]},
    entry_points={"console_scripts": ["retrodecode = retrodecode.cli:main"]},
)
