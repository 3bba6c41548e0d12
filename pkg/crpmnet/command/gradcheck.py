"""
Check every analytic backward pass against central finite differences.
"""

from __future__ import annotations

import logging

import click

from crpmnet import set_log_level
from crpmnet.engine.gradcheck import GRADIENT_CHECKS, CheckResult, run_gradient_checks
from crpmnet.shared import utils
from crpmnet.shared.constants import GRADCHECK_INSTANCES, GRADCHECK_TOLERANCE
from crpmnet.shared.exceptions import GradientCheckFailed

logger = logging.getLogger(__name__)


@click.command(short_help="Verify analytic gradients with finite differences")
@click.option("--seed", type=int, default=0, show_default=True, help="Random seed of the instances.")
@click.option(
    "--tolerance", type=float, default=GRADCHECK_TOLERANCE, show_default=True, help="Largest relative error that passes."
)
@click.option(
    "--instances", type=int, default=GRADCHECK_INSTANCES, show_default=True, help="Random instances per check."
)
@click.option("--corrupt", type=click.Choice(list(GRADIENT_CHECKS)), required=False, hidden=True)
@click.option("-v", "--verbose", "verbosity", help="Log verbosity level.", count=True)
@utils.exit_on_error
def gradcheck(seed: int, tolerance: float, instances: int, corrupt: str | None, verbosity: int) -> None:
    """
    Run the gradient-check suite over every complex layer, both losses and the whole patch classifier, then print a
    pass/fail table. Exits with 5 when any check fails.
    """
    set_log_level(verbosity)
    results = run_gradient_checks(seed=seed, tolerance=tolerance, instances=instances, corrupt=corrupt)
    print_table(results)
    failed = [result.name for result in results if not result.passed]
    if failed:
        raise GradientCheckFailed(f"{len(failed)} of {len(results)} checks exceed {tolerance:g}: {', '.join(failed)}")
    utils.print_green(f"All {len(results)} gradient checks pass at {tolerance:g}")


def print_table(results: list[CheckResult]) -> None:
    click.echo(f"{'check':<24}{'max_rel_error':>16}{'instances':>12}  result")
    for result in results:
        row = f"{result.name:<24}{result.max_error:>16.3e}{result.instances:>12}  "
        if result.passed:
            utils.print_green(row + "PASS")
        else:
            utils.print_red(row + "FAIL")
