#! /usr/bin/env python
"""
crpmnet trains complex-valued patch classifiers and dense refinement networks on PolSAR covariance scenes, and
classifies, evaluates and benchmarks whole scenes with them.
"""

import click

from crpmnet import command
from crpmnet.bin.version import __version__


@click.group()
@click.version_option(version=__version__)
def crpmnet() -> None:
    """
    crpmnet trains complex-valued patch classifiers and dense refinement networks on PolSAR covariance scenes, and
    classifies, evaluates and benchmarks whole scenes with them.
    """


crpmnet.add_command(command.synth.synth)
crpmnet.add_command(command.train.train)
crpmnet.add_command(command.predict.predict)
crpmnet.add_command(command.evaluate.evaluate)
crpmnet.add_command(command.gradcheck.gradcheck)
crpmnet.add_command(command.benchmark.benchmark)


def main() -> None:
    """crpmnet trains complex-valued patch classifiers and dense refinement networks on PolSAR covariance scenes."""
    crpmnet()


if __name__ == "__main__":
    crpmnet()
