import unittest

from crpmnet.bin.version import __version__
from crpmnet.output.metrics import ConfusionMatrix
from crpmnet.output.report import HTMLReport, render_asset


class HTMLReportTestCase(unittest.TestCase):
    def setUp(self):
        self.report = HTMLReport(ConfusionMatrix([[40, 10], [20, 30]]), "pred.pgm", "labels.pgm")

    def test_metrics_are_rendered(self):
        html = self.report.get_html_report()
        self.assertIn("0.700000", html)
        self.assertIn("0.400000", html)
        self.assertIn("0.535714", html)
        self.assertIn("<td>100</td>", html)
        self.assertIn(__version__, html)

    def test_names_are_escaped(self):
        report = HTMLReport(ConfusionMatrix([[1, 0], [0, 1]]), "<pred>.pgm", "labels.pgm")
        html = report.get_html_report()
        self.assertIn("&lt;pred&gt;.pgm", html)
        self.assertNotIn("<pred>", html)

    def test_confusion_diagonal_is_marked(self):
        html = self.report.get_html_report()
        self.assertIn('<td class="diagonal">40</td>', html)
        self.assertIn('<td class="diagonal">30</td>', html)

    def test_assets_render_markdown(self):
        self.assertIn("<h2>Glossary</h2>", render_asset("glossary.md"))
