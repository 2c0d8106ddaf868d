from setuptools import find_packages, setup
import os

# Get package name from environment variable or use default
package_name = os.environ.get("PACKAGE_NAME", "maskattack")

with open("requirements.txt", encoding="utf-8") as f:
    REQUIREMENTS = [
        line.strip()
        for line in f
        if line.strip() and not line.startswith("#") and "pytest" not in line
        and "hypothesis" not in line
    ]

setup(
    name=package_name,
    version="1.0.0",
    description="Psychoacoustic masking-music adversarial audio toolkit",
    packages=find_packages(include=["src", "src.*"]),
    py_modules=["main"],
    python_requires=">=3.9",
    install_requires=REQUIREMENTS,
    extras_require={"test": ["pytest>=7.4.0", "hypothesis>=6.80.0"]},
    entry_points={"console_scripts": ["maskattack = main:main"]},
)
