"""
Score a predicted class map against reference labels.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import click

from crpmnet import set_log_level
from crpmnet.output.class_map import read_pgm
from crpmnet.output.metrics import confusion
from crpmnet.output.report import HTMLReport
from crpmnet.shared import utils

logger = logging.getLogger(__name__)


@click.command(short_help="Score a class map: OA, Kappa, FWIoU and the confusion matrix")
@click.option("-p", "--pred", "prediction_file", type=click.Path(exists=True, dir_okay=False), required=True, help="Predicted class map PGM.")
@click.option("-l", "--labels", "labels_file", type=click.Path(exists=True, dir_okay=False), required=True, help="Reference label PGM, 0 for unlabeled.")
@click.option("-r", "--report", "report_file", type=click.Path(dir_okay=False), required=False, help="Write the metrics JSON here.")
@click.option("--html", "html_file", type=click.Path(dir_okay=False), required=False, help="Write an HTML report here.")
@click.option("--classes", type=int, required=False, help="Class count. Defaults to the largest class in either map.")
@click.option("-v", "--verbose", "verbosity", help="Log verbosity level.", count=True)
@utils.exit_on_error
def evaluate(
    prediction_file: str,
    labels_file: str,
    report_file: str | None,
    html_file: str | None,
    classes: int | None,
    verbosity: int,
) -> None:
    """
    Compare the predicted map with the reference labels on every labeled pixel and print the metrics as JSON.
    """
    set_log_level(verbosity)
    matrix = confusion(read_pgm(prediction_file), read_pgm(labels_file), classes)
    results = matrix.report()
    click.echo(json.dumps(results, indent=4))
    if report_file:
        utils.write_json_to_file(report_file, results)
        logger.info("Wrote metrics to %s", report_file)
    if html_file:
        html_report = HTMLReport(matrix, Path(prediction_file).name, Path(labels_file).name)
        utils.write_file(html_file, html_report.get_html_report())
        utils.print_green(f"HTML report written to {html_file}")
