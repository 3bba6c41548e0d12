import re
from pathlib import Path

import setuptools

HERE = Path(__file__).parent
VERSION_RE = re.compile(r"""__version__ = ['"]([0-9.]+)['"]""")
TESTS_REQUIRE = ["coverage", "pytest"]
REQUIRED_PACKAGES = [
    "cached-property",
    "click",
    "click_option_group",
    "jinja2",
    "markdown",
    "numpy>=1.22",
    "pyyaml",
    "schema",
]


def get_version() -> str:
    init = (HERE / "crpmnet/bin/version.py").read_text()
    return VERSION_RE.search(init).group(1)


def get_description() -> str:
    return (HERE / "README.md").read_text()


setuptools.setup(
    name="crpmnet",
    include_package_data=True,
    package_data={"crpmnet": ["shared/*.yml", "shared/*.json", "output/*.html", "output/src/assets/*.md"]},
    version=get_version(),
    description="Complex-valued patch classifiers and dense refinement networks for PolSAR image classification.",
    long_description=get_description(),
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(exclude=["test*", "tmp*"]),
    tests_require=TESTS_REQUIRE,
    install_requires=REQUIRED_PACKAGES,
    classifiers=[
        "Programming Language :: Python :: 3 :: Only",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Programming Language :: Python :: 3.13",
        "Operating System :: OS Independent",
    ],
    entry_points={"console_scripts": "crpmnet=crpmnet.bin.cli:main"},
    zip_safe=False,
    keywords="polsar sar complex-valued cnn image classification",
    python_requires=">=3.9",
)
