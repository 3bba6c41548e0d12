"""Creates the HTML evaluation report"""

from __future__ import annotations

import datetime
import os.path
from pathlib import Path
from typing import Any

import markdown
from jinja2 import Environment, FileSystemLoader

from crpmnet.bin.version import __version__
from crpmnet.output.metrics import ConfusionMatrix

assets_path = os.path.join(os.path.dirname(__file__), "src", "assets")


def render_asset(name: str) -> str:
    """Markdown asset rendered to HTML"""
    return markdown.markdown(Path(assets_path, name).read_text(encoding="utf-8"))


class HTMLReport:
    """Render accuracy measures, per-class accuracy and the confusion matrix of one prediction"""

    def __init__(self, matrix: ConfusionMatrix, prediction_name: str, labels_name: str) -> None:
        self.matrix = matrix
        self.prediction_name = prediction_name
        self.labels_name = labels_name
        self.report_generated_time = datetime.datetime.now().strftime("%Y-%m-%d")

    @property
    def results(self) -> dict[str, Any]:
        return self.matrix.report()

    def get_html_report(self) -> str:
        """Returns the rendered HTML report"""
        template_contents = dict(
            report=self.results,
            total=self.matrix.total,
            prediction_name=self.prediction_name,
            labels_name=self.labels_name,
            report_generated_time=self.report_generated_time,
            crpmnet_version=__version__,
            glossary=render_asset("glossary.md"),
            confusion_help=render_asset("confusion-matrix.md"),
        )
        template_path = os.path.dirname(__file__)
        env = Environment(loader=FileSystemLoader(template_path), autoescape=True)
        template = env.get_template("template.html")
        return template.render(t=template_contents)
